#include "nsrl/ucrl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nsrl::ucrl {

LearnerStats::LearnerStats(int states_, int actions_, Time restart_time_) : states(states_), actions(actions_) {
    if (states_ < 1 || actions_ < 1) throw std::invalid_argument("need at least one state and one action");
    const auto p = static_cast<std::size_t>(states_) * static_cast<std::size_t>(actions_);
    N.assign(p, 0);
    V.assign(p, 0);
    reward_sums.assign(p, 0.0);
    episode_reward.assign(p, 0.0);
    trans_counts.assign(p * static_cast<std::size_t>(states_), 0);
    episode_trans.assign(p * static_cast<std::size_t>(states_), 0);
    reset(*this, restart_time_);
}

void record(LearnerStats& stats, State o, Action a, double reward, State o_next) {
    if (o < 0 || o >= stats.states || o_next < 0 || o_next >= stats.states || a < 0 || a >= stats.actions)
        throw std::out_of_range("transition outside the state/action space");
    const std::size_t i = stats.pair(o, a);
    ++stats.V[i];
    stats.episode_reward[i] += reward;
    ++stats.episode_trans[i * static_cast<std::size_t>(stats.states) + static_cast<std::size_t>(o_next)];
    ++stats.t;
}

void begin_episode(LearnerStats& stats, Time t_k) {
    for (std::size_t i = 0; i < stats.pairs(); ++i) {
        stats.N[i] += stats.V[i];
        stats.V[i] = 0;
        stats.reward_sums[i] += stats.episode_reward[i];
        stats.episode_reward[i] = 0.0;
    }
    for (std::size_t i = 0; i < stats.trans_counts.size(); ++i) {
        stats.trans_counts[i] += stats.episode_trans[i];
        stats.episode_trans[i] = 0;
    }
    ++stats.episode;
    stats.episode_start = t_k;
}

bool should_end_episode(const LearnerStats& stats, State o, Action a) {
    const std::size_t i = stats.pair(o, a);
    return stats.V[i] >= std::max<Count>(1, stats.N[i]);
}

void reset(LearnerStats& stats, Time new_restart_time) {
    std::fill(stats.N.begin(), stats.N.end(), 0);
    std::fill(stats.V.begin(), stats.V.end(), 0);
    std::fill(stats.reward_sums.begin(), stats.reward_sums.end(), 0.0);
    std::fill(stats.episode_reward.begin(), stats.episode_reward.end(), 0.0);
    std::fill(stats.trans_counts.begin(), stats.trans_counts.end(), 0);
    std::fill(stats.episode_trans.begin(), stats.episode_trans.end(), 0);
    stats.restart_time = new_restart_time;
    stats.t = new_restart_time - 1;
    stats.episode = 0;
    stats.episode_start = new_restart_time;
}

Estimates estimates(const LearnerStats& stats) {
    const auto o_count = static_cast<std::size_t>(stats.states);
    Estimates est;
    est.rewards.assign(stats.pairs(), 0.0);
    est.transitions.assign(stats.pairs() * o_count, 0.0);
    for (std::size_t i = 0; i < stats.pairs(); ++i) {
        double* row = est.transitions.data() + i * o_count;
        if (stats.N[i] == 0) {
            row[0] = 1.0;
            continue;
        }
        const double n = static_cast<double>(stats.N[i]);
        est.rewards[i] = stats.reward_sums[i] / n;
        for (std::size_t j = 0; j < o_count; ++j) row[j] = static_cast<double>(stats.trans_counts[i * o_count + j]) / n;
    }
    return est;
}

ConfidenceSet confidence_radii(const LearnerStats& stats, Time t_k, double delta, double widening) {
    if (t_k < 1) throw std::domain_error("t_k must be at least 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("delta must lie in (0, 1)");
    if (!(widening >= 0.0)) throw std::domain_error("widening must be non-negative");
    const double O = stats.states;
    const double A = stats.actions;
    const double tk = static_cast<double>(t_k);
    const double reward_log = std::log(2.0 * O * A * tk / delta);
    const double trans_log = std::log(2.0 * A * tk / delta);
    ConfidenceSet conf;
    conf.widening = widening;
    conf.reward_radius.resize(stats.pairs());
    conf.trans_radius.resize(stats.pairs());
    for (std::size_t i = 0; i < stats.pairs(); ++i) {
        const double n = static_cast<double>(std::max<Count>(1, stats.N[i]));
        conf.reward_radius[i] = std::sqrt(7.0 * reward_log / (2.0 * n));
        conf.trans_radius[i] = std::sqrt(14.0 * O * trans_log / n) + widening;
    }
    return conf;
}

std::vector<double> inner_max_transition(std::span<const double> p_hat, double radius, std::span<const int> order) {
    std::vector<double> p(p_hat.begin(), p_hat.end());
    if (p.empty() || order.empty()) return p;
    radius = std::clamp(radius, 0.0, 2.0);
    const auto best = static_cast<std::size_t>(order[0]);
    p[best] = std::min(1.0, p_hat[best] + radius / 2.0);
    double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (std::size_t l = order.size() - 1; l > 0 && total > 1.0; --l) {
        const auto j = static_cast<std::size_t>(order[l]);
        const double others = total - p[j];
        const double keep = std::max(0.0, 1.0 - others);
        total = others + keep;
        p[j] = keep;
    }
    return p;
}

std::vector<Action> greedy_policy(int states, int actions, const Estimates& est, const ConfidenceSet& conf,
                                  std::span<const double> values, std::vector<double>* backed_up) {
    const auto n = static_cast<std::size_t>(states);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return values[static_cast<std::size_t>(x)] > values[static_cast<std::size_t>(y)];
    });
    std::vector<Action> policy(n, 0);
    if (backed_up) backed_up->assign(n, 0.0);
    for (std::size_t o = 0; o < n; ++o) {
        double best = -std::numeric_limits<double>::infinity();
        for (Action a = 0; a < actions; ++a) {
            const std::size_t i = o * static_cast<std::size_t>(actions) + static_cast<std::size_t>(a);
            const auto p = inner_max_transition({est.transitions.data() + i * n, n}, conf.trans_radius[i], order);
            double value = std::min(1.0, est.rewards[i] + conf.reward_radius[i]);
            for (std::size_t j = 0; j < n; ++j) value += p[j] * values[j];
            if (value > best) {
                best = value;
                policy[o] = a;
            }
        }
        if (backed_up) (*backed_up)[o] = best;
    }
    return policy;
}

EviResult extended_value_iteration(int states, int actions, const Estimates& est, const ConfidenceSet& conf, Time t_k,
                                   std::size_t max_iterations) {
    if (t_k < 1) throw std::domain_error("t_k must be at least 1");
    const auto n = static_cast<std::size_t>(states);
    const double epsilon = 1.0 / std::sqrt(static_cast<double>(t_k));

    std::vector<double> u(n, 0.0), next(n);
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        auto policy = greedy_policy(states, actions, est, conf, u, &next);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t o = 0; o < n; ++o) {
            lo = std::min(lo, next[o] - u[o]);
            hi = std::max(hi, next[o] - u[o]);
        }
        // recentre so the iterate stays bounded
        const double floor = *std::min_element(next.begin(), next.end());
        for (std::size_t o = 0; o < n; ++o) u[o] = next[o] - floor;
        if (hi - lo < epsilon) {
            EviResult out;
            out.policy = std::move(policy);
            out.gain = 0.5 * (hi + lo);
            out.values = u;
            out.iterations = it;
            return out;
        }
    }
    throw std::runtime_error("extended value iteration hit its cap of " + std::to_string(max_iterations) + " sweeps");
}

} // namespace nsrl::ucrl
