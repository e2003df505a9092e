#pragma once
// Experiment harness: deterministic realizations, exact regret accounting
// against the active optimal gain, aggregation and file outputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsrl/agents.hpp"
#include "nsrl/envs.hpp"

namespace nsrl::bench {

using envs::Time;

struct ExperimentConfig {
    envs::GenConfig env;
    std::string env_path; // when set, the environment is loaded instead of generated
    std::vector<agents::AgentConfig> agents;
    int realizations = 20;
    std::uint64_t base_seed = 1;
    double delta = 0.05;
    std::string output_dir = "results";
    int workers = 0; // 0 = hardware concurrency
    int pilot_realizations = 3;

    void validate() const;
    static ExperimentConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

struct GainTable {
    std::vector<double> rho;      // per segment
    std::vector<double> diameter; // per segment
    double max_diameter = 0.0;

    nlohmann::json to_json() const;
};

GainTable precompute_gains(const envs::SwitchingMdp& mdp, double tol = 1e-9);

/// rho*(t) for t = 1..T.
std::vector<double> gain_profile(const envs::SwitchingMdp& mdp, const GainTable& gains);

agents::EnvFacts env_facts(const envs::SwitchingMdp& mdp, const GainTable& gains);

std::uint64_t realization_seed(std::uint64_t base_seed, std::uint64_t index, const std::string& tag);

struct RegretTrace {
    std::vector<double> reward;            // r_t
    std::vector<double> rho;               // rho*(t)
    std::vector<double> cumulative_reward; // prefix sums of reward
    std::vector<double> cumulative_regret; // prefix sums of rho - reward
};

struct RunResult {
    std::string agent;
    std::uint64_t seed = 0;
    std::size_t realization = 0;
    double final_reward = 0.0;
    double final_regret = 0.0;
    std::vector<Time> restarts;
    std::int64_t episodes = 0;
    double wall_seconds = 0.0; // not persisted
    RegretTrace trace;

    nlohmann::json summary_json() const;
};

/// One full pass over the horizon; deterministic in (mdp, agent config, seed).
RunResult run_realization(const envs::SwitchingMdp& mdp, const std::vector<double>& rho_profile,
                          const agents::AgentConfig& agent, const agents::EnvFacts& facts, double delta,
                          std::uint64_t seed, bool keep_steps = false);

struct AgentSummary {
    std::string tag;
    agents::AgentConfig config;
    nlohmann::json resolved = nlohmann::json::object();
    std::vector<double> mean_reward;
    std::vector<double> stderr_reward;
    std::vector<double> mean_regret;
    std::vector<RunResult> runs; // traces dropped after aggregation
};

struct Failure {
    std::string agent;
    std::uint64_t seed = 0;
    std::string message;
};

struct ExperimentResult {
    ExperimentConfig config;
    envs::SwitchingMdp mdp;
    GainTable gains;
    std::vector<AgentSummary> agents;
    std::vector<Failure> failures;
};

envs::SwitchingMdp load_or_generate(const ExperimentConfig& config);

/// Aggregates per-run curves into mean / standard error / mean regret.
void aggregate(AgentSummary& summary, const std::vector<RunResult>& runs, Time horizon);

using Progress = std::function<void(const std::string& line)>;

ExperimentResult run_experiment(const ExperimentConfig& config, const Progress& progress = {});

/// Writes <tag>.csv per agent, metadata.json, results.json and cumulative_reward.svg.
void emit_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

/// Reads results.json + metadata.json written by emit_outputs.
ExperimentResult load_results(const std::filesystem::path& dir);

std::string render_svg(const std::vector<AgentSummary>& agents, Time horizon);

} // namespace nsrl::bench
