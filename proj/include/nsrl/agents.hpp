#pragma once
// R-BOCPD-UCRL2 and the comparison agents behind one act/observe interface.

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsrl/cpd.hpp"
#include "nsrl/envs.hpp"
#include "nsrl/ucrl.hpp"

namespace nsrl::agents {

using envs::Action;
using envs::State;
using envs::Time;

enum class Event { none, episode_ended, restarted };

class Agent {
public:
    virtual ~Agent() = default;

    virtual std::string tag() const = 0;
    /// Action for `state` at the next time step; re-plans when an episode starts.
    virtual Action act(State state) = 0;
    virtual Event observe(State o, Action a, double reward, State o_next) = 0;
    virtual void reset_for_new_run() = 0;

    /// Times r at which learning restarted (excluding the initial r = 1).
    virtual const std::vector<Time>& restart_times() const = 0;
    virtual std::int64_t episodes() const = 0;
};

// ---------------------------------------------------------------------------
// Hyperparameter formulas

/// (16.53 / K * T * D * O * sqrt(A log(T / delta)))^(2/3), rounded, at least 1.
std::int64_t sw_window(int segments, Time horizon, double diameter, int states, int actions, double delta);

struct SwcwParams {
    std::int64_t window = 1;
    double widening = 0.0;
};

/// W = 3 O^(2/3) A^(1/2) T^(1/2) / sqrt(B_r + B_p + 1), eta = sqrt((B_p + 1) W / T).
SwcwParams swcw_params(int states, int actions, Time horizon, double budget_p, double budget_r);

struct VariationBudgets {
    double transitions = 0.0; // B_p
    double rewards = 0.0;     // B_r
};

/// Sum over changes of the largest per-pair L1 kernel shift and reward shift.
VariationBudgets variation_budgets(const envs::SwitchingMdp& mdp);

/// ceil(i^3 / K^2).
Time restart_schedule(std::int64_t i, int segments);

/// Distinct schedule times in (1, horizon].
std::vector<Time> restart_times_until(Time horizon, int segments);

// ---------------------------------------------------------------------------
// Sliding-window statistics

struct Transition {
    State o = 0;
    Action a = 0;
    double reward = 0.0;
    State o_next = 0;
};

/// Counts over the last W transitions, maintained incrementally.
class SlidingWindow {
public:
    SlidingWindow(int states, int actions, std::int64_t window);

    void push(const Transition& tr);
    void clear();

    std::int64_t window() const { return window_; }
    std::size_t size() const { return buffer_.size(); }

    /// Writes N, reward sums and transition counts into stats (V untouched).
    void export_to(ucrl::LearnerStats& stats) const;

    const std::vector<ucrl::Count>& counts() const { return N_; }
    const std::vector<double>& reward_sums() const { return R_; }
    const std::vector<ucrl::Count>& trans_counts() const { return P_; }

private:
    void add(const Transition& tr, int sign);

    int states_, actions_;
    std::int64_t window_;
    std::deque<Transition> buffer_;
    std::vector<ucrl::Count> N_;
    std::vector<double> R_;
    std::vector<ucrl::Count> P_;
};

/// Recount over history steps [max(1, t - W + 1), t] (history[0] is step 1).
void sliding_window_counts(const std::vector<Transition>& history, std::int64_t window, Time t,
                           ucrl::LearnerStats& out);

// ---------------------------------------------------------------------------
// Agents

class Ucrl2Agent : public Agent {
public:
    Ucrl2Agent(int states, int actions, double delta, std::string tag = "ucrl2");

    std::string tag() const override { return tag_; }
    Action act(State state) override;
    Event observe(State o, Action a, double reward, State o_next) override;
    void reset_for_new_run() override;
    const std::vector<Time>& restart_times() const override { return restarts_; }
    std::int64_t episodes() const override { return episodes_; }

    const ucrl::LearnerStats& stats() const { return stats_; }
    const ucrl::EviResult& plan() const { return plan_; }
    Time time() const { return t_; }

protected:
    /// Restart learning so that the next step starts a fresh episode at r = t + 1.
    void restart();
    virtual void prepare_episode() {}
    virtual double widening() const { return 0.0; }
    /// Sees step t after the UCRL2 statistics absorbed it; true requests a restart.
    virtual bool after_step(const Transition&) { return false; }
    virtual void on_reset() {}

    int states_, actions_;
    double delta_;
    std::string tag_;
    ucrl::LearnerStats stats_;
    ucrl::EviResult plan_;
    bool need_plan_ = true;
    Time t_ = 0; // last observed time
    std::int64_t episodes_ = 0;
    std::vector<Time> restarts_;
};

/// Resets at each known change point.
class OracleAgent : public Ucrl2Agent {
public:
    /// change_points: the interior points c_1..c_{K-1}.
    OracleAgent(int states, int actions, double delta, std::vector<Time> change_points, std::string tag = "oracle");

protected:
    bool after_step(const Transition& tr) override;

private:
    std::vector<Time> change_points_; // interior points only
};

/// Resets at the fixed times ceil(i^3 / K^2).
class RestartedUcrl2Agent : public Ucrl2Agent {
public:
    RestartedUcrl2Agent(int states, int actions, double delta, int segments, Time horizon,
                        std::string tag = "restarted_ucrl2");

    const std::vector<Time>& schedule() const { return schedule_; }

protected:
    bool after_step(const Transition& tr) override;

private:
    std::vector<Time> schedule_;
};

/// UCRL2 whose estimates only use the last W transitions.
class SwUcrl2Agent : public Ucrl2Agent {
public:
    SwUcrl2Agent(int states, int actions, double delta, std::int64_t window, double widening = 0.0,
                 std::string tag = "swucrl2");

    const SlidingWindow& window() const { return window_; }

protected:
    void prepare_episode() override;
    double widening() const override { return widening_; }
    bool after_step(const Transition& tr) override;
    void on_reset() override;

private:
    SlidingWindow window_;
    double widening_;
};

/// Algorithm with one multinomial change detector per state-action pair.
class RbocpdUcrl2Agent : public Ucrl2Agent {
public:
    RbocpdUcrl2Agent(int states, int actions, double delta, cpd::DetectorConfig detector_template,
                     std::string tag = "rbocpd_ucrl2");

    const cpd::ForecasterBank& detector(State o, Action a) const;
    const cpd::DetectorConfig& detector_config() const { return detector_config_; }

protected:
    bool after_step(const Transition& tr) override;
    void on_reset() override;

private:
    cpd::DetectorConfig detector_config_;
    std::vector<cpd::ForecasterBank> detectors_;
};

// ---------------------------------------------------------------------------
// Configuration

/// Everything an agent factory needs about the environment.
struct EnvFacts {
    int states = 0;
    int actions = 0;
    Time horizon = 0;
    int segments = 1;
    std::vector<Time> change_points;
    double diameter = 1.0;
    VariationBudgets budgets;
};

struct AgentConfig {
    std::string type; // ucrl2, oracle, restarted_ucrl2, swucrl2, swucrl2_cw, rbocpd_ucrl2
    std::string tag;  // defaults to type
    nlohmann::json params = nlohmann::json::object();

    static AgentConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    std::string label() const { return tag.empty() ? type : tag; }
};

/// Builds the agent; `resolved` receives the effective hyperparameters.
std::unique_ptr<Agent> make_agent(const AgentConfig& config, const EnvFacts& env, double delta,
                                  nlohmann::json* resolved = nullptr);

} // namespace nsrl::agents
