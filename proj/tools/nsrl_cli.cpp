// nsrl: command-line front end for environment generation, benchmark runs,
// stream change detection and report re-emission.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nsrl/bench.hpp"
#include "nsrl/cpd.hpp"
#include "nsrl/envs.hpp"

using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << text;
    if (!f) throw std::runtime_error("write failed for " + path);
}

int run_detect(const nsrl::cpd::DetectorConfig& config, const std::string& input, const std::string& resume,
               const std::string& state_out) {
    auto bank = resume.empty() ? nsrl::cpd::ForecasterBank(config)
                               : nsrl::cpd::ForecasterBank::from_json(read_json_file(resume));
    std::ifstream file;
    std::istream* in = &std::cin;
    if (!input.empty() && input != "-") {
        file.open(input);
        if (!file) throw std::runtime_error("cannot open " + input);
        in = &file;
    }
    std::string line;
    long line_no = 0;
    while (std::getline(*in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        long long symbol = 0;
        std::istringstream ss(line.substr(first));
        std::string rest;
        if (!(ss >> symbol) || (ss >> rest))
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected one integer symbol");
        if (symbol < 1 || symbol > bank.config().alphabet_size)
            throw std::runtime_error("line " + std::to_string(line_no) + ": symbol " + std::to_string(symbol) +
                                     " outside 1.." + std::to_string(bank.config().alphabet_size));
        const auto verdict = bank.step(static_cast<int>(symbol - 1));
        if (verdict.restarted) std::cout << verdict.change_estimate << '\n';
    }
    if (!state_out.empty()) write_text(state_out, bank.to_json().dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Change detection and non-stationary reinforcement learning benchmark"};
    app.require_subcommand(1);

    // gen-env
    auto* gen = app.add_subcommand("gen-env", "Generate a switching MDP and write it as JSON");
    nsrl::envs::GenConfig gc;
    std::string gen_out = "-";
    gen->add_option("--states", gc.states, "Number of states")->capture_default_str();
    gen->add_option("--actions", gc.actions, "Number of actions")->capture_default_str();
    gen->add_option("--segments", gc.segments, "Number of stationary segments")->capture_default_str();
    gen->add_option("--horizon", gc.horizon, "Horizon T")->capture_default_str();
    gen->add_option("--min-segment-len", gc.min_segment_len, "Shortest allowed segment")->capture_default_str();
    gen->add_option("--eps", gc.smoothing_eps, "Uniform smoothing of kernel rows")->capture_default_str();
    gen->add_option("--reward-variation", gc.reward_variation, "Reward blend between segments")->capture_default_str();
    gen->add_option("--seed", gc.seed, "Generator seed")->capture_default_str();
    gen->add_option("-o,--out", gen_out, "Output file (- for stdout)")->capture_default_str();

    // run
    auto* run = app.add_subcommand("run", "Run an experiment configuration");
    std::string config_path, out_dir;
    int workers = -1, realizations = 0;
    std::uint64_t seed = 0;
    bool seed_given = false, full_scale = false, quiet = false;
    run->add_option("--config", config_path, "Experiment configuration (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory (overrides the config)");
    run->add_option("--workers", workers, "Worker threads (0 = all cores)");
    run->add_option("--realizations", realizations, "Realizations per agent");
    run->add_option("--seed", seed, "Base seed")->each([&](const std::string&) { seed_given = true; });
    run->add_flag("--full-scale", full_scale, "Use 100 realizations");
    run->add_flag("-q,--quiet", quiet, "No progress lines on stderr");

    // detect
    auto* det = app.add_subcommand("detect", "Run the change detector on a stream of 1-based symbols");
    nsrl::cpd::DetectorConfig dc;
    std::string schedule = nsrl::cpd::to_string(dc.eta_schedule), input, resume, state_out;
    det->add_option("--alphabet", dc.alphabet_size, "Alphabet size O")->required();
    det->add_option("--delta", dc.delta, "Confidence level")->capture_default_str();
    det->add_option("--schedule", schedule, "eta schedule: reciprocal, constant, theory_upper_bound")
        ->capture_default_str();
    det->add_option("--eta", dc.eta_constant, "Value for the constant schedule")->capture_default_str();
    det->add_option("--alpha", dc.alpha, "alpha of the theory schedule")->capture_default_str();
    det->add_option("--max-forecasters", dc.max_forecasters, "Forecaster cap (0 = none)")->capture_default_str();
    det->add_option("--resume", resume, "Detector state JSON to continue from");
    det->add_option("--state-out", state_out, "Write the final detector state JSON here");
    det->add_option("input", input, "Symbol file (default stdin)");

    // report
    auto* rep = app.add_subcommand("report", "Re-emit CSV and SVG from saved results");
    std::string rep_in, rep_out;
    rep->add_option("--in", rep_in, "Directory written by run")->required();
    rep->add_option("--out", rep_out, "Output directory (default: --in)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            write_text(gen_out, nsrl::envs::generate_switching(gc).to_json().dump(2) + "\n");
        } else if (*run) {
            auto cfg_doc = read_json_file(config_path);
            auto cfg = nsrl::bench::ExperimentConfig::from_json(cfg_doc);
            if (!cfg.env_path.empty() && !std::filesystem::path(cfg.env_path).is_absolute())
                cfg.env_path = (std::filesystem::path(config_path).parent_path() / cfg.env_path).string();
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (workers >= 0) cfg.workers = workers;
            if (full_scale) cfg.realizations = 100;
            if (realizations > 0) cfg.realizations = realizations;
            if (seed_given) cfg.base_seed = seed;
            nsrl::bench::Progress progress;
            if (!quiet) progress = [](const std::string& line) { std::cerr << line << '\n'; };
            const auto result = nsrl::bench::run_experiment(cfg, progress);
            nsrl::bench::emit_outputs(result, cfg.output_dir);
            for (const auto& a : result.agents) {
                double mean = 0.0;
                for (const auto& r : a.runs) mean += r.final_reward;
                if (!a.runs.empty()) mean /= static_cast<double>(a.runs.size());
                std::cout << a.tag << " mean_final_reward=" << mean
                          << " mean_final_regret=" << (a.mean_regret.empty() ? 0.0 : a.mean_regret.back()) << '\n';
            }
            if (!result.failures.empty()) {
                for (const auto& f : result.failures)
                    std::cerr << "error: " << f.agent << " seed " << f.seed << ": " << f.message << '\n';
                return 2;
            }
        } else if (*det) {
            dc.eta_schedule = nsrl::cpd::eta_kind_from_string(schedule);
            dc.validate();
            return run_detect(dc, input, resume, state_out);
        } else if (*rep) {
            const auto result = nsrl::bench::load_results(rep_in);
            nsrl::bench::emit_outputs(result, rep_out.empty() ? rep_in : rep_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
