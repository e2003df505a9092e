#pragma once
// Stationary UCRL2 machinery shared by every agent: sufficient statistics
// since the last restart, confidence sets, extended value iteration and the
// episode doubling rule.

#include <cstdint>
#include <span>
#include <vector>

namespace nsrl::ucrl {

using State = int;
using Action = int;
using Time = std::int64_t;
using Count = std::int64_t;

/// N, reward_sums and trans_counts cover [r, t_k); V and the episode_*
/// buffers hold the current episode and are merged by begin_episode().
struct LearnerStats {
    int states = 0;
    int actions = 0;
    Time restart_time = 1;
    Time t = 0;             // last observed time
    Count episode = 0;      // episodes started since restart_time
    Time episode_start = 1; // t_k
    std::vector<Count> N;
    std::vector<Count> V;
    std::vector<double> reward_sums;
    std::vector<Count> trans_counts; // O x A x O
    std::vector<double> episode_reward;
    std::vector<Count> episode_trans;

    LearnerStats() = default;
    LearnerStats(int states, int actions, Time restart_time = 1);

    std::size_t pair(State o, Action a) const {
        return static_cast<std::size_t>(o) * static_cast<std::size_t>(actions) + static_cast<std::size_t>(a);
    }
    std::size_t pairs() const { return N.size(); }
};

/// Records one transition observed at time stats.t + 1.
void record(LearnerStats& stats, State o, Action a, double reward, State o_next);

/// Folds the finished episode into N and opens episode k+1 at t_k.
void begin_episode(LearnerStats& stats, Time t_k);

bool should_end_episode(const LearnerStats& stats, State o, Action a);

/// Zeroes every count and sets restart_time (normally t + 1).
void reset(LearnerStats& stats, Time new_restart_time);

struct Estimates {
    std::vector<double> rewards;     // O x A
    std::vector<double> transitions; // O x A x O
};

/// Empirical means over [r, t_k). Unvisited pairs: reward 0, point mass on state 0.
Estimates estimates(const LearnerStats& stats);

struct ConfidenceSet {
    std::vector<double> reward_radius;
    std::vector<double> trans_radius;
    double widening = 0.0;
};

/// Throws std::domain_error unless t_k >= 1 and 0 < delta < 1.
ConfidenceSet confidence_radii(const LearnerStats& stats, Time t_k, double delta, double widening = 0.0);

/// Maximiser of sum_j p(j) u(j) over the L1 ball of radius min(radius, 2)
/// around p_hat, where order lists states by decreasing u.
std::vector<double> inner_max_transition(std::span<const double> p_hat, double radius, std::span<const int> order);

struct EviResult {
    std::vector<Action> policy;
    double gain = 0.0;
    std::vector<double> values;
    std::size_t iterations = 0;
};

/// One optimistic Bellman sweep over `values`: returns the argmax actions
/// (lowest index on ties) and writes the backed-up values into `backed_up`.
std::vector<Action> greedy_policy(int states, int actions, const Estimates& est, const ConfidenceSet& conf,
                                  std::span<const double> values, std::vector<double>* backed_up = nullptr);

/// Extended value iteration to span accuracy 1/sqrt(t_k). Throws
/// std::runtime_error after max_iterations sweeps.
EviResult extended_value_iteration(int states, int actions, const Estimates& est, const ConfidenceSet& conf, Time t_k,
                                   std::size_t max_iterations = 1'000'000);

} // namespace nsrl::ucrl
