#include "nsrl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nsrl::agents {

std::int64_t sw_window(int segments, Time horizon, double diameter, int states, int actions, double delta) {
    if (segments < 1 || horizon < 1 || !(diameter > 0.0) || states < 1 || actions < 1)
        throw std::domain_error("sw_window needs positive arguments");
    if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("delta must lie in (0, 1)");
    const double T = static_cast<double>(horizon);
    const double log_term = std::log(T / delta);
    if (!(log_term > 0.0)) throw std::domain_error("log(T / delta) must be positive");
    const double base = 16.53 / segments * T * diameter * states * std::sqrt(actions * log_term);
    return std::max<std::int64_t>(1, std::llround(std::pow(base, 2.0 / 3.0)));
}

SwcwParams swcw_params(int states, int actions, Time horizon, double budget_p, double budget_r) {
    if (horizon < 1) throw std::domain_error("horizon must be positive");
    if (states < 1 || actions < 1) throw std::domain_error("need at least one state and one action");
    if (!(budget_p >= 0.0 && budget_r >= 0.0)) throw std::domain_error("variation budgets must be non-negative");
    const double T = static_cast<double>(horizon);
    const double w = 3.0 * std::pow(states, 2.0 / 3.0) * std::sqrt(static_cast<double>(actions)) * std::sqrt(T) /
                     std::sqrt(budget_r + budget_p + 1.0);
    SwcwParams out;
    out.window = std::max<std::int64_t>(1, std::llround(w));
    out.widening = std::sqrt((budget_p + 1.0) * static_cast<double>(out.window) / T);
    return out;
}

VariationBudgets variation_budgets(const envs::SwitchingMdp& mdp) {
    VariationBudgets out;
    for (std::size_t l = 1; l < mdp.segment_count(); ++l) {
        const auto& prev = mdp.segments[l - 1];
        const auto& cur = mdp.segments[l];
        double kernel_shift = 0.0;
        double reward_shift = 0.0;
        for (State o = 0; o < cur.states; ++o)
            for (Action a = 0; a < cur.actions; ++a) {
                const auto p = prev.row(o, a);
                const auto q = cur.row(o, a);
                double l1 = 0.0;
                for (std::size_t j = 0; j < p.size(); ++j) l1 += std::abs(q[j] - p[j]);
                kernel_shift = std::max(kernel_shift, l1);
                reward_shift = std::max(reward_shift, std::abs(cur.reward(o, a) - prev.reward(o, a)));
            }
        out.transitions += kernel_shift;
        out.rewards += reward_shift;
    }
    return out;
}

Time restart_schedule(std::int64_t i, int segments) {
    if (i < 1 || segments < 1) throw std::domain_error("restart_schedule needs i >= 1 and K >= 1");
    const std::int64_t cube = i * i * i;
    const std::int64_t k2 = static_cast<std::int64_t>(segments) * segments;
    return (cube + k2 - 1) / k2;
}

std::vector<Time> restart_times_until(Time horizon, int segments) {
    std::vector<Time> out;
    for (std::int64_t i = 1;; ++i) {
        const Time tau = restart_schedule(i, segments);
        if (tau > horizon) break;
        if (tau > 1 && (out.empty() || out.back() != tau)) out.push_back(tau);
    }
    return out;
}

// ---------------------------------------------------------------------------

SlidingWindow::SlidingWindow(int states, int actions, std::int64_t window)
    : states_(states), actions_(actions), window_(window) {
    if (window < 1) throw std::invalid_argument("window must be at least 1");
    const auto pairs = static_cast<std::size_t>(states) * static_cast<std::size_t>(actions);
    N_.assign(pairs, 0);
    R_.assign(pairs, 0.0);
    P_.assign(pairs * static_cast<std::size_t>(states), 0);
}

void SlidingWindow::add(const Transition& tr, int sign) {
    const auto i = static_cast<std::size_t>(tr.o) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(tr.a);
    N_[i] += sign;
    R_[i] += sign * tr.reward;
    P_[i * static_cast<std::size_t>(states_) + static_cast<std::size_t>(tr.o_next)] += sign;
}

void SlidingWindow::push(const Transition& tr) {
    buffer_.push_back(tr);
    add(tr, +1);
    if (static_cast<std::int64_t>(buffer_.size()) > window_) {
        add(buffer_.front(), -1);
        buffer_.pop_front();
    }
}

void SlidingWindow::clear() {
    buffer_.clear();
    std::fill(N_.begin(), N_.end(), 0);
    std::fill(R_.begin(), R_.end(), 0.0);
    std::fill(P_.begin(), P_.end(), 0);
}

void SlidingWindow::export_to(ucrl::LearnerStats& stats) const {
    stats.N = N_;
    stats.trans_counts = P_;
    stats.reward_sums = R_;
    for (std::size_t i = 0; i < N_.size(); ++i)
        if (N_[i] == 0) stats.reward_sums[i] = 0.0;
}

void sliding_window_counts(const std::vector<Transition>& history, std::int64_t window, Time t,
                           ucrl::LearnerStats& out) {
    if (window < 1) throw std::invalid_argument("window must be at least 1");
    std::fill(out.N.begin(), out.N.end(), 0);
    std::fill(out.reward_sums.begin(), out.reward_sums.end(), 0.0);
    std::fill(out.trans_counts.begin(), out.trans_counts.end(), 0);
    const Time first = std::max<Time>(1, t - window + 1);
    for (Time s = first; s <= t; ++s) {
        const auto& tr = history.at(static_cast<std::size_t>(s - 1));
        const std::size_t i = out.pair(tr.o, tr.a);
        ++out.N[i];
        out.reward_sums[i] += tr.reward;
        ++out.trans_counts[i * static_cast<std::size_t>(out.states) + static_cast<std::size_t>(tr.o_next)];
    }
}

// ---------------------------------------------------------------------------

Ucrl2Agent::Ucrl2Agent(int states, int actions, double delta, std::string tag)
    : states_(states), actions_(actions), delta_(delta), tag_(std::move(tag)), stats_(states, actions) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("delta must lie in (0, 1)");
}

Action Ucrl2Agent::act(State state) {
    if (state < 0 || state >= states_) throw std::out_of_range("state out of range");
    if (need_plan_) {
        const Time t_k = t_ + 1;
        ucrl::begin_episode(stats_, t_k);
        prepare_episode();
        const auto est = ucrl::estimates(stats_);
        const auto conf = ucrl::confidence_radii(stats_, t_k, delta_, widening());
        plan_ = ucrl::extended_value_iteration(states_, actions_, est, conf, t_k);
        ++episodes_;
        need_plan_ = false;
    }
    return plan_.policy[static_cast<std::size_t>(state)];
}

Event Ucrl2Agent::observe(State o, Action a, double reward, State o_next) {
    ucrl::record(stats_, o, a, reward, o_next);
    ++t_;
    if (after_step(Transition{o, a, reward, o_next})) {
        restart();
        return Event::restarted;
    }
    if (ucrl::should_end_episode(stats_, o_next, plan_.policy[static_cast<std::size_t>(o_next)])) {
        need_plan_ = true;
        return Event::episode_ended;
    }
    return Event::none;
}

void Ucrl2Agent::restart() {
    ucrl::reset(stats_, t_ + 1);
    restarts_.push_back(t_ + 1);
    need_plan_ = true;
    on_reset();
}

void Ucrl2Agent::reset_for_new_run() {
    ucrl::reset(stats_, 1);
    plan_ = {};
    need_plan_ = true;
    t_ = 0;
    episodes_ = 0;
    restarts_.clear();
    on_reset();
}

OracleAgent::OracleAgent(int states, int actions, double delta, std::vector<Time> change_points, std::string tag)
    : Ucrl2Agent(states, actions, delta, std::move(tag)) {
    std::sort(change_points.begin(), change_points.end());
    change_points_ = std::move(change_points);
}

bool OracleAgent::after_step(const Transition&) {
    return std::binary_search(change_points_.begin(), change_points_.end(), t_ + 1);
}

RestartedUcrl2Agent::RestartedUcrl2Agent(int states, int actions, double delta, int segments, Time horizon,
                                         std::string tag)
    : Ucrl2Agent(states, actions, delta, std::move(tag)), schedule_(restart_times_until(horizon, segments)) {}

bool RestartedUcrl2Agent::after_step(const Transition&) {
    return std::binary_search(schedule_.begin(), schedule_.end(), t_ + 1);
}

SwUcrl2Agent::SwUcrl2Agent(int states, int actions, double delta, std::int64_t window, double widening,
                           std::string tag)
    : Ucrl2Agent(states, actions, delta, std::move(tag)), window_(states, actions, window), widening_(widening) {
    if (!(widening >= 0.0)) throw std::domain_error("widening must be non-negative");
}

void SwUcrl2Agent::prepare_episode() { window_.export_to(stats_); }

bool SwUcrl2Agent::after_step(const Transition& tr) {
    window_.push(tr);
    return false;
}

void SwUcrl2Agent::on_reset() { window_.clear(); }

RbocpdUcrl2Agent::RbocpdUcrl2Agent(int states, int actions, double delta, cpd::DetectorConfig detector_template,
                                   std::string tag)
    : Ucrl2Agent(states, actions, delta, std::move(tag)), detector_config_(detector_template) {
    detector_config_.alphabet_size = states;
    if (states >= 2) {
        detector_config_.validate();
        detectors_.assign(static_cast<std::size_t>(states) * static_cast<std::size_t>(actions),
                          cpd::ForecasterBank(detector_config_));
    }
}

const cpd::ForecasterBank& RbocpdUcrl2Agent::detector(State o, Action a) const {
    return detectors_.at(stats_.pair(o, a));
}

bool RbocpdUcrl2Agent::after_step(const Transition& tr) {
    if (detectors_.empty()) return false;
    return detectors_[stats_.pair(tr.o, tr.a)].step(tr.o_next).restarted;
}

void RbocpdUcrl2Agent::on_reset() {
    for (auto& d : detectors_) d.reset(1);
}

// ---------------------------------------------------------------------------

AgentConfig AgentConfig::from_json(const nlohmann::json& doc) {
    AgentConfig out;
    out.type = doc.at("type").get<std::string>();
    out.tag = doc.value("tag", std::string{});
    if (doc.contains("params") && !doc.at("params").is_null()) out.params = doc.at("params");
    if (!out.params.is_object()) throw std::invalid_argument("agent params must be an object");
    return out;
}

nlohmann::json AgentConfig::to_json() const {
    nlohmann::json doc{{"type", type}, {"params", params.is_null() ? nlohmann::json::object() : params}};
    if (!tag.empty()) doc["tag"] = tag;
    return doc;
}

std::unique_ptr<Agent> make_agent(const AgentConfig& config, const EnvFacts& env, double delta,
                                  nlohmann::json* resolved) {
    const nlohmann::json p = config.params.is_null() ? nlohmann::json::object() : config.params;
    if (!p.is_object()) throw std::invalid_argument("agent params must be an object");
    const std::string label = config.label();
    nlohmann::json eff = nlohmann::json::object();
    std::unique_ptr<Agent> agent;
    if (config.type == "ucrl2") {
        agent = std::make_unique<Ucrl2Agent>(env.states, env.actions, delta, label);
    } else if (config.type == "oracle") {
        std::vector<Time> interior;
        if (env.change_points.size() > 2)
            interior.assign(env.change_points.begin() + 1, env.change_points.end() - 1);
        agent = std::make_unique<OracleAgent>(env.states, env.actions, delta, std::move(interior), label);
    } else if (config.type == "restarted_ucrl2") {
        const int k = p.value("segments", env.segments);
        eff["segments"] = k;
        agent = std::make_unique<RestartedUcrl2Agent>(env.states, env.actions, delta, k, env.horizon, label);
    } else if (config.type == "swucrl2") {
        std::int64_t w;
        if (p.contains("window")) {
            w = p.at("window").get<std::int64_t>();
        } else {
            const double d = p.value("diameter", env.diameter);
            eff["diameter"] = d;
            w = sw_window(env.segments, env.horizon, d, env.states, env.actions, delta);
        }
        eff["window"] = w;
        agent = std::make_unique<SwUcrl2Agent>(env.states, env.actions, delta, w, 0.0, label);
    } else if (config.type == "swucrl2_cw") {
        const auto defaults = swcw_params(env.states, env.actions, env.horizon, env.budgets.transitions, env.budgets.rewards);
        const std::int64_t w = p.value("window", defaults.window);
        const double widening = p.value("widening", defaults.widening);
        eff["window"] = w;
        eff["widening"] = widening;
        eff["budget_p"] = env.budgets.transitions;
        eff["budget_r"] = env.budgets.rewards;
        agent = std::make_unique<SwUcrl2Agent>(env.states, env.actions, delta, w, widening, label);
    } else if (config.type == "rbocpd_ucrl2") {
        cpd::DetectorConfig det;
        det.alphabet_size = env.states;
        const double share = p.value("detector_delta_share", 0.5);
        if (!(share > 0.0 && share < 1.0)) throw std::invalid_argument("detector_delta_share must lie in (0, 1)");
        det.delta = delta * share / (static_cast<double>(env.states) * env.actions);
        det.eta_schedule = cpd::eta_kind_from_string(p.value("eta_schedule", cpd::to_string(det.eta_schedule)));
        det.eta_constant = p.value("eta_constant", det.eta_constant);
        det.alpha = p.value("alpha", det.alpha);
        det.max_forecasters = p.value("max_forecasters", std::size_t{0});
        eff["ucrl_delta"] = delta * (1.0 - share);
        eff["detector_delta"] = det.delta;
        eff["eta_schedule"] = cpd::to_string(det.eta_schedule);
        eff["alpha"] = det.alpha;
        eff["max_forecasters"] = det.max_forecasters;
        agent = std::make_unique<RbocpdUcrl2Agent>(env.states, env.actions, delta * (1.0 - share), det, label);
    } else {
        throw std::invalid_argument("unknown agent type '" + config.type + "'");
    }
    if (resolved) *resolved = std::move(eff);
    return agent;
}

} // namespace nsrl::agents
