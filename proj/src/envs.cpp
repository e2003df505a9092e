#include "nsrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nsrl::envs {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "nsrl.envs.switching_mdp";

} // namespace

MdpSpec::MdpSpec(int states_, int actions_)
    : states(states_), actions(actions_),
      kernel(static_cast<std::size_t>(states_) * static_cast<std::size_t>(actions_) * static_cast<std::size_t>(states_), 0.0),
      mean_rewards(static_cast<std::size_t>(states_) * static_cast<std::size_t>(actions_), 0.0) {
    if (states_ < 1 || actions_ < 1) throw std::invalid_argument("an MDP needs at least one state and one action");
}

std::span<const double> MdpSpec::row(State o, Action a) const {
    return {kernel.data() + index(o, a) * static_cast<std::size_t>(states), static_cast<std::size_t>(states)};
}

std::span<double> MdpSpec::row(State o, Action a) {
    return {kernel.data() + index(o, a) * static_cast<std::size_t>(states), static_cast<std::size_t>(states)};
}

void MdpSpec::validate() const {
    if (states < 1 || actions < 1) throw std::invalid_argument("an MDP needs at least one state and one action");
    const auto pairs = static_cast<std::size_t>(states) * static_cast<std::size_t>(actions);
    if (kernel.size() != pairs * static_cast<std::size_t>(states) || mean_rewards.size() != pairs)
        throw std::invalid_argument("MDP arrays do not match its dimensions");
    for (State o = 0; o < states; ++o)
        for (Action a = 0; a < actions; ++a) {
            double sum = 0.0;
            for (double p : row(o, a)) {
                if (!(p >= 0.0)) throw std::invalid_argument("negative transition probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw std::invalid_argument("kernel row (" + std::to_string(o) + ", " + std::to_string(a) +
                                            ") sums to " + std::to_string(sum));
            const double r = reward(o, a);
            if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("mean reward outside [0, 1]");
        }
}

void SwitchingMdp::validate() const {
    if (segments.empty()) throw std::invalid_argument("switching MDP has no segments");
    if (change_points.size() != segments.size() + 1)
        throw std::invalid_argument("need exactly one more change point than segments");
    if (change_points.front() != 1) throw std::invalid_argument("first change point must be 1");
    for (std::size_t l = 0; l < segments.size(); ++l) {
        segments[l].validate();
        if (segments[l].states != segments.front().states || segments[l].actions != segments.front().actions)
            throw std::invalid_argument("segments disagree on state or action counts");
        if (change_points[l + 1] - change_points[l] < 2)
            throw std::invalid_argument("segments must be at least two steps long");
    }
}

void GenConfig::validate() const {
    if (states < 1 || actions < 1) throw std::invalid_argument("need at least one state and one action");
    if (segments < 1) throw std::invalid_argument("need at least one segment");
    if (min_segment_len < 2) throw std::invalid_argument("min_segment_len must be at least 2");
    if (horizon < 2) throw std::invalid_argument("horizon must be at least 2");
    if (static_cast<Time>(segments) * min_segment_len > horizon)
        throw std::invalid_argument("cannot place " + std::to_string(segments) + " segments of length >= " +
                                    std::to_string(min_segment_len) + " in horizon " + std::to_string(horizon));
    if (!(smoothing_eps >= 0.0 && smoothing_eps <= 1.0)) throw std::invalid_argument("smoothing_eps must lie in [0, 1]");
    if (!(reward_variation >= 0.0 && reward_variation <= 1.0))
        throw std::invalid_argument("reward_variation must lie in [0, 1]");
}

namespace {

void draw_kernel(MdpSpec& mdp, double eps, Rng& rng) {
    const double floor = eps / mdp.states;
    for (State o = 0; o < mdp.states; ++o)
        for (Action a = 0; a < mdp.actions; ++a) {
            auto row = mdp.row(o, a);
            if (eps >= 1.0) {
                std::fill(row.begin(), row.end(), 1.0 / mdp.states);
                continue;
            }
            double total = 0.0;
            for (double& p : row) total += (p = rng.exponential());
            for (double& p : row) p = (1.0 - eps) * (p / total) + floor;
            // renormalise so the row sums to one to machine precision
            double sum = 0.0;
            for (double p : row) sum += p;
            for (double& p : row) p /= sum;
        }
}

} // namespace

MdpSpec generate_mdp(const GenConfig& config, Rng& rng) {
    config.validate();
    MdpSpec mdp(config.states, config.actions);
    draw_kernel(mdp, config.smoothing_eps, rng);
    for (double& r : mdp.mean_rewards) r = rng.uniform();
    return mdp;
}

SwitchingMdp generate_switching(const GenConfig& config, Rng& rng) {
    config.validate();
    const int k = config.segments;
    const Time m = config.min_segment_len;
    const Time slack = config.horizon - static_cast<Time>(k) * m;

    // Stars and bars: a uniform (k-1)-subset of {0, ..., slack + k - 2}
    // shifted by its rank is a uniform non-decreasing offset sequence.
    std::set<Time> picks;
    const auto range = static_cast<std::uint64_t>(slack + k - 1);
    while (static_cast<int>(picks.size()) < k - 1) picks.insert(static_cast<Time>(rng.below(range)));

    SwitchingMdp out;
    out.seed = config.seed;
    out.change_points.push_back(1);
    Time rank = 0;
    for (Time y : picks) {
        const Time offset = y - rank;
        out.change_points.push_back(1 + (rank + 1) * m + offset);
        ++rank;
    }
    out.change_points.push_back(config.horizon + 1);

    out.segments.push_back(generate_mdp(config, rng));
    for (int l = 1; l < k; ++l) {
        MdpSpec next(config.states, config.actions);
        draw_kernel(next, config.smoothing_eps, rng);
        const auto& prev = out.segments.back();
        for (std::size_t i = 0; i < next.mean_rewards.size(); ++i) {
            const double fresh = rng.uniform();
            next.mean_rewards[i] = (1.0 - config.reward_variation) * prev.mean_rewards[i] + config.reward_variation * fresh;
        }
        out.segments.push_back(std::move(next));
    }
    out.validate();
    return out;
}

SwitchingMdp generate_switching(const GenConfig& config) {
    Rng rng(config.seed);
    return generate_switching(config, rng);
}

std::size_t active_index(const SwitchingMdp& mdp, Time t) {
    if (t < 1 || t > mdp.horizon())
        throw std::out_of_range("time " + std::to_string(t) + " outside [1, " + std::to_string(mdp.horizon()) + "]");
    const auto it = std::upper_bound(mdp.change_points.begin(), mdp.change_points.end(), t);
    return static_cast<std::size_t>(std::distance(mdp.change_points.begin(), it)) - 1;
}

// ---------------------------------------------------------------------------

Environment::Environment(const SwitchingMdp& mdp, std::uint64_t seed) : mdp_(&mdp), rng_(seed) {
    mdp.validate();
    state_ = static_cast<State>(rng_.below(static_cast<std::uint64_t>(mdp.states())));
}

StepResult Environment::step(Action action) {
    if (done()) throw std::out_of_range("environment stepped past its horizon");
    const auto& seg = mdp_->segments[segment_];
    if (action < 0 || action >= seg.actions) throw std::out_of_range("action out of range");
    StepResult out;
    out.next_state = rng_.categorical(seg.row(state_, action));
    out.reward = rng_.bernoulli(seg.reward(state_, action)) ? 1.0 : 0.0;
    state_ = out.next_state;
    ++t_;
    if (segment_ + 1 < mdp_->segment_count() && t_ >= mdp_->change_points[segment_ + 1]) ++segment_;
    return out;
}

// ---------------------------------------------------------------------------

GainResult optimal_gain(const MdpSpec& mdp, double tol, std::size_t max_iterations) {
    mdp.validate();
    // P' = tau * P + (1 - tau) * I keeps the gain and scales the bias by 1/tau.
    constexpr double tau = 0.5;
    const int n = mdp.states;
    std::vector<double> u(static_cast<std::size_t>(n), 0.0), next(u.size());
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (State o = 0; o < n; ++o) {
            double best = -std::numeric_limits<double>::infinity();
            for (Action a = 0; a < mdp.actions; ++a) {
                const auto row = mdp.row(o, a);
                double ev = 0.0;
                for (State j = 0; j < n; ++j) ev += row[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)];
                best = std::max(best, mdp.reward(o, a) + tau * ev);
            }
            const double value = best + (1.0 - tau) * u[static_cast<std::size_t>(o)];
            next[static_cast<std::size_t>(o)] = value;
            const double diff = value - u[static_cast<std::size_t>(o)];
            lo = std::min(lo, diff);
            hi = std::max(hi, diff);
        }
        if (hi - lo < tol) {
            GainResult out;
            out.rho = 0.5 * (hi + lo);
            out.iterations = it;
            out.bias.resize(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) out.bias[i] = tau * (u[i] - u[0]);
            return out;
        }
        const double anchor = next[0];
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = next[i] - anchor;
    }
    throw std::runtime_error("relative value iteration did not converge; the MDP is likely not communicating");
}

namespace {

// Expected hitting times of `target` under `policy`; states that cannot
// reach the target make the system singular.
std::vector<double> hitting_times(const MdpSpec& mdp, const std::vector<Action>& policy, State target) {
    const int n = mdp.states;
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Ones(n);
    for (State o = 0; o < n; ++o) {
        if (o == target) {
            b(o) = 0.0;
            continue;
        }
        const auto row = mdp.row(o, policy[static_cast<std::size_t>(o)]);
        for (State j = 0; j < n; ++j)
            if (j != target) a(o, j) -= row[static_cast<std::size_t>(j)];
    }
    const Eigen::VectorXd x = a.fullPivLu().solve(b);
    return {x.data(), x.data() + n};
}

} // namespace

double diameter(const MdpSpec& mdp, double tol) {
    mdp.validate();
    const int n = mdp.states;
    if (n == 1) return 0.0;
    double worst = 0.0;
    for (State target = 0; target < n; ++target) {
        // Proper starting policy: breadth-first search backwards from the target.
        std::vector<Action> policy(static_cast<std::size_t>(n), 0);
        std::vector<bool> reached(static_cast<std::size_t>(n), false);
        reached[static_cast<std::size_t>(target)] = true;
        std::deque<State> frontier{target};
        while (!frontier.empty()) {
            const State j = frontier.front();
            frontier.pop_front();
            for (State o = 0; o < n; ++o) {
                if (reached[static_cast<std::size_t>(o)]) continue;
                for (Action a = 0; a < mdp.actions; ++a)
                    if (mdp.row(o, a)[static_cast<std::size_t>(j)] > 0.0) {
                        reached[static_cast<std::size_t>(o)] = true;
                        policy[static_cast<std::size_t>(o)] = a;
                        frontier.push_back(o);
                        break;
                    }
            }
        }
        if (std::find(reached.begin(), reached.end(), false) != reached.end())
            throw std::runtime_error("state " + std::to_string(target) +
                                     " is unreachable from some state; the MDP is not communicating");

        // Policy iteration on the stochastic shortest path problem.
        std::vector<double> times = hitting_times(mdp, policy, target);
        for (int round = 0; round < 10'000; ++round) {
            bool changed = false;
            for (State o = 0; o < n; ++o) {
                if (o == target) continue;
                auto cost = [&](Action a) {
                    const auto row = mdp.row(o, a);
                    double c = 1.0;
                    for (State j = 0; j < n; ++j) c += row[static_cast<std::size_t>(j)] * times[static_cast<std::size_t>(j)];
                    return c;
                };
                const Action current = policy[static_cast<std::size_t>(o)];
                double best = cost(current);
                for (Action a = 0; a < mdp.actions; ++a) {
                    const double c = cost(a);
                    if (c < best - tol * std::max(1.0, best)) {
                        best = c;
                        policy[static_cast<std::size_t>(o)] = a;
                        changed = true;
                    }
                }
            }
            if (!changed) break;
            times = hitting_times(mdp, policy, target);
        }
        for (State o = 0; o < n; ++o)
            if (o != target) worst = std::max(worst, times[static_cast<std::size_t>(o)]);
    }
    if (!std::isfinite(worst)) throw std::runtime_error("diameter diverged; the MDP is not communicating");
    return worst;
}

// ---------------------------------------------------------------------------

nlohmann::json SwitchingMdp::to_json() const {
    nlohmann::json doc;
    doc["format"] = kFormatName;
    doc["version"] = kFormatVersion;
    doc["states"] = states();
    doc["actions"] = actions();
    doc["horizon"] = horizon();
    doc["seed"] = seed;
    doc["change_points"] = change_points;
    auto& segs = doc["segments"] = nlohmann::json::array();
    for (const auto& s : segments) segs.push_back({{"kernel", s.kernel}, {"rewards", s.mean_rewards}});
    return doc;
}

SwitchingMdp SwitchingMdp::from_json(const nlohmann::json& doc) {
    if (doc.value("format", std::string{}) != kFormatName)
        throw std::invalid_argument("not a switching MDP document");
    if (doc.at("version").get<int>() != kFormatVersion)
        throw std::invalid_argument("unsupported switching MDP version " + doc.at("version").dump());
    SwitchingMdp out;
    const int states = doc.at("states").get<int>();
    const int actions = doc.at("actions").get<int>();
    out.seed = doc.value("seed", std::uint64_t{0});
    out.change_points = doc.at("change_points").get<std::vector<Time>>();
    for (const auto& s : doc.at("segments")) {
        MdpSpec m(states, actions);
        m.kernel = s.at("kernel").get<std::vector<double>>();
        m.mean_rewards = s.at("rewards").get<std::vector<double>>();
        out.segments.push_back(std::move(m));
    }
    out.validate();
    if (doc.contains("horizon") && doc.at("horizon").get<Time>() != out.horizon())
        throw std::invalid_argument("horizon disagrees with the last change point");
    return out;
}

} // namespace nsrl::envs
