#pragma once
// Tabular MDPs, piecewise-stationary (switching) MDPs, simulation and the
// exact evaluation oracles used for regret accounting.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "nsrl/random.hpp"

namespace nsrl::envs {

using State = int;
using Action = int;
using Time = std::int64_t;

/// Transition kernel stored as states x actions x states, rewards as
/// states x actions, both row-major.
struct MdpSpec {
    int states = 0;
    int actions = 0;
    std::vector<double> kernel;
    std::vector<double> mean_rewards;

    MdpSpec() = default;
    MdpSpec(int states, int actions);

    std::span<const double> row(State o, Action a) const;
    std::span<double> row(State o, Action a);
    double reward(State o, Action a) const { return mean_rewards[index(o, a)]; }
    double& reward(State o, Action a) { return mean_rewards[index(o, a)]; }
    std::size_t index(State o, Action a) const {
        return static_cast<std::size_t>(o) * static_cast<std::size_t>(actions) + static_cast<std::size_t>(a);
    }

    /// Throws std::invalid_argument unless every row is a distribution and
    /// rewards lie in [0, 1].
    void validate() const;

    bool operator==(const MdpSpec&) const = default;
};

/// Segments M_0..M_{K-1}, active on [c_l, c_{l+1}) with c_0 = 1 and c_K = T + 1.
struct SwitchingMdp {
    std::vector<MdpSpec> segments;
    std::vector<Time> change_points;
    std::uint64_t seed = 0;

    int states() const { return segments.front().states; }
    int actions() const { return segments.front().actions; }
    Time horizon() const { return change_points.back() - 1; }
    std::size_t segment_count() const { return segments.size(); }
    Time segment_length(std::size_t l) const { return change_points[l + 1] - change_points[l]; }

    void validate() const;

    nlohmann::json to_json() const;
    static SwitchingMdp from_json(const nlohmann::json& doc);

    bool operator==(const SwitchingMdp&) const = default;
};

struct GenConfig {
    int states = 4;
    int actions = 2;
    int segments = 1;
    Time horizon = 10000;
    Time min_segment_len = 2;
    double smoothing_eps = 0.02;
    double reward_variation = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Kernel rows (1 - eps) * Dirichlet(1, ..., 1) + eps / O, rewards uniform on [0, 1].
MdpSpec generate_mdp(const GenConfig& config, Rng& rng);

/// Change points uniform among the placements respecting min_segment_len;
/// every segment gets a fresh kernel, and rewards blend a fresh draw with the
/// previous segment's rewards by reward_variation.
SwitchingMdp generate_switching(const GenConfig& config, Rng& rng);
SwitchingMdp generate_switching(const GenConfig& config);

/// Segment index l with c_l <= t < c_{l+1}. Throws std::out_of_range outside [1, T].
std::size_t active_index(const SwitchingMdp& mdp, Time t);

struct StepResult {
    State next_state = 0;
    double reward = 0.0;
};

/// Single-owner simulation state over a shared, immutable switching MDP.
class Environment {
public:
    Environment(const SwitchingMdp& mdp, std::uint64_t seed);

    Time time() const { return t_; }
    State state() const { return state_; }
    bool done() const { return t_ > mdp_->horizon(); }
    const SwitchingMdp& mdp() const { return *mdp_; }

    /// Plays `action` at the current time; throws std::out_of_range past the horizon.
    StepResult step(Action action);

private:
    const SwitchingMdp* mdp_;
    Rng rng_;
    Time t_ = 1;
    State state_ = 0;
    std::size_t segment_ = 0;
};

struct GainResult {
    double rho = 0.0;
    std::vector<double> bias; // h(0) = 0
    std::size_t iterations = 0;
};

/// Optimal average reward by relative value iteration (aperiodicity
/// transform, anchor state 0). Throws std::runtime_error when the span
/// criterion is not met within max_iterations.
GainResult optimal_gain(const MdpSpec& mdp, double tol = 1e-9, std::size_t max_iterations = 1'000'000);

/// Max over ordered pairs of the minimal expected hitting time. Throws
/// std::runtime_error for non-communicating MDPs.
double diameter(const MdpSpec& mdp, double tol = 1e-9);

} // namespace nsrl::envs
