#pragma once
/*
Restarted Bayesian online change-point detection for multinomial streams.

Each forecaster s in the bank is the hypothesis "the last change happened at
time s". Its weight is the product of sequential Laplace predictions of the
symbols seen since s, scaled by the evidence of the data before s and by a
prior factor eta_{r,s,t}. A restart is declared as soon as any hypothesis
s in (r, t] outweighs the no-change forecaster anchored at r.

All weights live in the log domain. Symbols are 0-based (0..O-1); times are
1-based, matching the usual stream convention.
*/

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace nsrl::cpd {

using Time = std::int64_t;
using Count = std::int64_t;

enum class EtaKind { reciprocal, constant, theory_upper_bound };

std::string to_string(EtaKind kind);
EtaKind eta_kind_from_string(const std::string& name);

/// b1 and alpha of the false-alarm bound.
struct TheoryParams {
    double alpha = 1.1;
    double b1 = 0.0;

    static TheoryParams for_alphabet(int alphabet_size, double alpha = 1.1);
};

struct DetectorConfig {
    int alphabet_size = 2;
    double delta = 0.05;
    EtaKind eta_schedule = EtaKind::theory_upper_bound;
    double eta_constant = 1.0;       // used by EtaKind::constant only
    std::size_t max_forecasters = 0; // 0 = unbounded
    double alpha = 1.1;

    void validate() const;
    TheoryParams theory() const { return TheoryParams::for_alphabet(alphabet_size, alpha); }
};

struct Forecaster {
    Time start = 1;
    double log_weight = 0.0;
    std::vector<Count> symbol_counts;
    Count n = 0;
};

struct Verdict {
    bool restarted = false;
    Time change_estimate = 1;
};

// ---------------------------------------------------------------------------
// Predictor and loss

/// (counts[x] + 1) / (n + O). Throws std::domain_error if x is out of range.
double laplace_predict(std::span<const Count> symbol_counts, Count n, int x);

double forecaster_loss(const Forecaster& forecaster, int x);

/// Cumulative loss of a forecaster that has seen the given counts, in closed
/// form: log((n+O-1)!) - sum_o log(count_o!) - log((O-1)!). Zero when n = 0.
double closed_form_cumulative_loss(std::span<const Count> symbol_counts, Count n, int alphabet_size);

// ---------------------------------------------------------------------------
// Prior schedule

/// log eta_{r,s,t} for the configured schedule. Requires r <= s <= t; the
/// theory schedule additionally requires s > r.
double log_eta(Time r, Time s, Time t, const DetectorConfig& config);
double eta(Time r, Time s, Time t, const DetectorConfig& config);

// ---------------------------------------------------------------------------
// Detector state

class ForecasterBank {
public:
    explicit ForecasterBank(DetectorConfig config);

    /// Feeds the next symbol (time t+1). Throws std::domain_error without
    /// touching the bank when x is out of range.
    Verdict step(int x);

    /// Drops every forecaster and starts over at new_restart_time.
    void reset(Time new_restart_time);

    const DetectorConfig& config() const { return config_; }
    Time restart_time() const { return restart_time_; }
    Time time() const { return t_; }
    double log_W_prev() const { return log_W_prev_; }
    std::size_t size() const { return starts_.size(); }
    /// Symbols absorbed since the last restart.
    Count observations() const { return t_ - restart_time_ + 1; }

    Forecaster forecaster(std::size_t i) const;
    std::vector<Forecaster> forecasters() const;

    nlohmann::json to_json() const;
    static ForecasterBank from_json(const nlohmann::json& doc);

private:
    double log_eta_shared_ratio(Count n) const;
    double log_eta_fresh(Time t) const;
    double g_term(Count m) const;
    double h_term(Count n) const;
    void ensure_tables(Count n) const;
    void evict_lightest();

    DetectorConfig config_;
    TheoryParams theory_;
    Time restart_time_ = 1;
    Time t_ = 0;
    double log_W_prev_ = 0.0;

    std::vector<Time> starts_;
    std::vector<double> log_weights_;
    std::vector<Count> counts_; // size() x O, row-major

    // log eta_theory(n1, n2, n) = g(n1) + g(n2) + h(n); cached by argument.
    mutable std::vector<double> g_table_;
    mutable std::vector<double> h_table_;
};

/// Restart rule on a weight vector whose first entry is the anchor: true iff
/// some later entry is strictly larger.
bool restart_rule(std::span<const double> log_weights);

// ---------------------------------------------------------------------------
// Theoretical bound calculators

/// f_{r,s,t} of the delay analysis. Requires r < s <= t.
double f_term(Time r, Time s, Time t, int alphabet_size);

/// Concentration radius C_{r,s,t,delta}. Requires r < s <= t and 0 < delta < 1.
double concentration_radius(Time r, Time s, Time t, double delta);

/// log of the largest eta that still guarantees a false-alarm probability
/// below delta (strict upper bound), for split lengths n1 = n_{r:s-1} and
/// n2 = n_{s:t}.
double log_false_alarm_eta_upper_bound(Count n1, Count n2, double delta, const TheoryParams& theory,
                                       int alphabet_size);
double false_alarm_eta_upper_bound(Count n1, Count n2, double delta, const TheoryParams& theory,
                                   int alphabet_size);

/// Smallest delay d >= 1 satisfying the finite-delay inequality for a change
/// at c after a restart at r, with eta taken from config's schedule. Returns
/// std::nullopt when no d up to the cap qualifies (default cap:
/// 10 * (c - r) + 10000).
std::optional<Count> delay_bound(std::span<const double> gaps, Time r, Time c, const DetectorConfig& config,
                                 std::optional<Count> cap = std::nullopt);

} // namespace nsrl::cpd
