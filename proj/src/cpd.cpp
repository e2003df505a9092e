#include "nsrl/cpd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nsrl::cpd {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "nsrl.cpd.detector";

// log(k) for small non-negative integers; the loss update only ever needs
// logs of integers.
double log_int(Count k) {
    static const std::vector<double> table = [] {
        std::vector<double> v(1 << 18);
        v[0] = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < v.size(); ++i) v[i] = std::log(static_cast<double>(i));
        return v;
    }();
    if (k >= 0 && static_cast<std::size_t>(k) < table.size()) return table[static_cast<std::size_t>(k)];
    return std::log(static_cast<double>(k));
}

void check_symbol(int x, int alphabet_size) {
    if (x < 0 || x >= alphabet_size)
        throw std::domain_error("symbol " + std::to_string(x) + " outside alphabet of size " +
                                std::to_string(alphabet_size));
}

void check_order(Time r, Time s, Time t, bool strict_rs) {
    if (r < 1 || s > t || (strict_rs ? s <= r : s < r))
        throw std::domain_error("time indices must satisfy r " + std::string(strict_rs ? "<" : "<=") +
                                " s <= t (got r=" + std::to_string(r) + ", s=" + std::to_string(s) +
                                ", t=" + std::to_string(t) + ")");
}

void check_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("delta must lie in (0, 1)");
}

} // namespace

std::string to_string(EtaKind kind) {
    switch (kind) {
    case EtaKind::reciprocal: return "reciprocal";
    case EtaKind::constant: return "constant";
    case EtaKind::theory_upper_bound: return "theory_upper_bound";
    }
    return "unknown";
}

EtaKind eta_kind_from_string(const std::string& name) {
    if (name == "reciprocal") return EtaKind::reciprocal;
    if (name == "constant") return EtaKind::constant;
    if (name == "theory_upper_bound" || name == "theory") return EtaKind::theory_upper_bound;
    throw std::invalid_argument("unknown eta schedule '" + name + "'");
}

TheoryParams TheoryParams::for_alphabet(int alphabet_size, double alpha) {
    if (alphabet_size < 2) throw std::domain_error("alphabet size must be at least 2");
    if (!(alpha > 1.0)) throw std::domain_error("alpha must exceed 1");
    const double o = alphabet_size;
    TheoryParams p;
    p.alpha = alpha;
    p.b1 = -o / 12.0 - 0.5 * (o - 1.0) * std::log(2.0 * std::numbers::pi) + 0.5 * o * std::log(o);
    return p;
}

void DetectorConfig::validate() const {
    if (alphabet_size < 2) throw std::domain_error("alphabet size must be at least 2");
    check_delta(delta);
    if (eta_schedule == EtaKind::constant && !(eta_constant > 0.0 && eta_constant <= 1.0))
        throw std::domain_error("constant eta must lie in (0, 1]");
    if (!(alpha > 1.0)) throw std::domain_error("alpha must exceed 1");
    if (max_forecasters == 1) throw std::domain_error("max_forecasters must be 0 (unbounded) or at least 2");
}

// ---------------------------------------------------------------------------

double laplace_predict(std::span<const Count> symbol_counts, Count n, int x) {
    const int o = static_cast<int>(symbol_counts.size());
    check_symbol(x, o);
    return (static_cast<double>(symbol_counts[static_cast<std::size_t>(x)]) + 1.0) /
           (static_cast<double>(n) + o);
}

double forecaster_loss(const Forecaster& forecaster, int x) {
    return -std::log(laplace_predict(forecaster.symbol_counts, forecaster.n, x));
}

double closed_form_cumulative_loss(std::span<const Count> symbol_counts, Count n, int alphabet_size) {
    if (n == 0) return 0.0;
    double loss = std::lgamma(static_cast<double>(n + alphabet_size)) - std::lgamma(static_cast<double>(alphabet_size));
    for (Count c : symbol_counts) loss -= std::lgamma(static_cast<double>(c) + 1.0);
    return loss;
}

// ---------------------------------------------------------------------------

double log_eta(Time r, Time s, Time t, const DetectorConfig& config) {
    switch (config.eta_schedule) {
    case EtaKind::reciprocal:
        check_order(r, s, t, false);
        return -std::log(static_cast<double>(t - r + 1));
    case EtaKind::constant:
        check_order(r, s, t, false);
        return std::log(config.eta_constant);
    case EtaKind::theory_upper_bound:
        check_order(r, s, t, true);
        return log_false_alarm_eta_upper_bound(s - r, t - s + 1, config.delta, config.theory(),
                                               config.alphabet_size);
    }
    throw std::logic_error("unhandled eta schedule");
}

double eta(Time r, Time s, Time t, const DetectorConfig& config) { return std::exp(log_eta(r, s, t, config)); }

// ---------------------------------------------------------------------------

bool restart_rule(std::span<const double> log_weights) {
    if (log_weights.size() < 2) return false;
    const double anchor = log_weights.front();
    return std::any_of(log_weights.begin() + 1, log_weights.end(), [anchor](double w) { return w > anchor; });
}

ForecasterBank::ForecasterBank(DetectorConfig config) : config_(config) {
    config_.validate();
    theory_ = config_.theory();
    reset(1);
}

void ForecasterBank::reset(Time new_restart_time) {
    restart_time_ = new_restart_time;
    t_ = new_restart_time - 1;
    log_W_prev_ = 0.0;
    starts_.assign(1, new_restart_time);
    log_weights_.assign(1, 0.0);
    counts_.assign(static_cast<std::size_t>(config_.alphabet_size), 0);
}

double ForecasterBank::g_term(Count m) const { return g_table_[static_cast<std::size_t>(m)]; }
double ForecasterBank::h_term(Count n) const { return h_table_[static_cast<std::size_t>(n)]; }

void ForecasterBank::ensure_tables(Count n) const {
    if (config_.eta_schedule != EtaKind::theory_upper_bound) return;
    const auto need = static_cast<std::size_t>(n) + 1;
    if (g_table_.size() >= need) return;
    const int o = config_.alphabet_size;
    const double half = 0.5 * (o - 1);
    const double a = theory_.alpha;
    const double constant = 2.0 * theory_.b1 - std::lgamma(static_cast<double>(o)) +
                            a * (std::log(std::log(4.0 * a + 2.0)) + 2.0 * std::log(config_.delta));
    std::size_t from = g_table_.size();
    const std::size_t target = std::max(need, 2 * from);
    g_table_.resize(target);
    h_table_.resize(target);
    if (from == 0) {
        g_table_[0] = std::numeric_limits<double>::quiet_NaN();
        h_table_[0] = std::numeric_limits<double>::quiet_NaN();
        from = 1;
    }
    for (std::size_t m = from; m < target; ++m) {
        const double md = static_cast<double>(m);
        double up = 0.0;
        for (int i = 1; i < o; ++i) up += std::log(md + i);
        g_table_[m] = up - half * std::log(md);
        h_table_[m] = -up + constant - a * (std::log(4.0 * md) + std::log(std::log((a + 3.0) * md)));
    }
}

// Part of log(eta_{r,s,t} / eta_{r,s,t-1}) shared by every forecaster.
double ForecasterBank::log_eta_shared_ratio(Count n) const {
    switch (config_.eta_schedule) {
    case EtaKind::reciprocal: return log_int(n - 1) - log_int(n);
    case EtaKind::constant: return 0.0;
    case EtaKind::theory_upper_bound: return h_term(n) - h_term(n - 1);
    }
    return 0.0;
}

double ForecasterBank::log_eta_fresh(Time t) const {
    const Count n = t - restart_time_ + 1;
    switch (config_.eta_schedule) {
    case EtaKind::reciprocal: return -log_int(n);
    case EtaKind::constant: return std::log(config_.eta_constant);
    case EtaKind::theory_upper_bound: return g_term(t - restart_time_) + g_term(1) + h_term(n);
    }
    return 0.0;
}

Verdict ForecasterBank::step(int x) {
    const int o = config_.alphabet_size;
    check_symbol(x, o);
    const Time t = t_ + 1;
    const Count n = t - restart_time_ + 1;
    ensure_tables(n);

    if (t > restart_time_) {
        starts_.push_back(t);
        log_weights_.push_back(log_eta_fresh(t) + log_W_prev_);
        counts_.resize(counts_.size() + static_cast<std::size_t>(o), 0);
    }

    const std::size_t size = starts_.size();
    const std::size_t fresh = (t > restart_time_) ? size - 1 : size;
    const bool theory = config_.eta_schedule == EtaKind::theory_upper_bound;
    const double shared_ratio = fresh > 1 ? log_eta_shared_ratio(n) : 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const Count seen = t - starts_[i];
        Count& c = counts_[i * static_cast<std::size_t>(o) + static_cast<std::size_t>(x)];
        double update = log_int(c + 1) - log_int(seen + o);
        if (i != 0 && i < fresh) {
            update += shared_ratio;
            if (theory) update += g_term(seen + 1) - g_term(seen);
        }
        log_weights_[i] += update;
        ++c;
    }
    t_ = t;
    log_W_prev_ = log_weights_.front();

    if (restart_rule(log_weights_)) {
        reset(t + 1);
        return {true, restart_time_};
    }
    if (config_.max_forecasters != 0 && starts_.size() > config_.max_forecasters) evict_lightest();
    return {false, restart_time_};
}

void ForecasterBank::evict_lightest() {
    auto lightest = std::min_element(log_weights_.begin() + 1, log_weights_.end());
    const auto i = static_cast<std::size_t>(std::distance(log_weights_.begin(), lightest));
    const auto o = static_cast<std::size_t>(config_.alphabet_size);
    starts_.erase(starts_.begin() + static_cast<std::ptrdiff_t>(i));
    log_weights_.erase(log_weights_.begin() + static_cast<std::ptrdiff_t>(i));
    counts_.erase(counts_.begin() + static_cast<std::ptrdiff_t>(i * o),
                  counts_.begin() + static_cast<std::ptrdiff_t>((i + 1) * o));
}

Forecaster ForecasterBank::forecaster(std::size_t i) const {
    if (i >= starts_.size()) throw std::out_of_range("forecaster index out of range");
    const auto o = static_cast<std::size_t>(config_.alphabet_size);
    Forecaster f;
    f.start = starts_[i];
    f.log_weight = log_weights_[i];
    f.symbol_counts.assign(counts_.begin() + static_cast<std::ptrdiff_t>(i * o),
                           counts_.begin() + static_cast<std::ptrdiff_t>((i + 1) * o));
    f.n = t_ - starts_[i] + 1;
    return f;
}

std::vector<Forecaster> ForecasterBank::forecasters() const {
    std::vector<Forecaster> out;
    out.reserve(starts_.size());
    for (std::size_t i = 0; i < starts_.size(); ++i) out.push_back(forecaster(i));
    return out;
}

nlohmann::json ForecasterBank::to_json() const {
    nlohmann::json doc;
    doc["format"] = kFormatName;
    doc["version"] = kFormatVersion;
    doc["alphabet_size"] = config_.alphabet_size;
    doc["delta"] = config_.delta;
    doc["eta_schedule"] = {{"kind", to_string(config_.eta_schedule)}, {"value", config_.eta_constant}};
    doc["alpha"] = config_.alpha;
    doc["max_forecasters"] = config_.max_forecasters;
    doc["restart_time"] = restart_time_;
    doc["t"] = t_;
    doc["log_W_prev"] = log_W_prev_;
    auto& list = doc["forecasters"] = nlohmann::json::array();
    for (const auto& f : forecasters())
        list.push_back({{"start", f.start}, {"log_weight", f.log_weight}, {"counts", f.symbol_counts}});
    return doc;
}

ForecasterBank ForecasterBank::from_json(const nlohmann::json& doc) {
    if (doc.value("format", std::string{}) != kFormatName)
        throw std::invalid_argument("not a detector state document");
    if (doc.at("version").get<int>() != kFormatVersion)
        throw std::invalid_argument("unsupported detector state version " + doc.at("version").dump());

    DetectorConfig cfg;
    cfg.alphabet_size = doc.at("alphabet_size").get<int>();
    cfg.delta = doc.at("delta").get<double>();
    cfg.eta_schedule = eta_kind_from_string(doc.at("eta_schedule").at("kind").get<std::string>());
    cfg.eta_constant = doc.at("eta_schedule").value("value", 1.0);
    cfg.alpha = doc.value("alpha", 1.1);
    cfg.max_forecasters = doc.value("max_forecasters", std::size_t{0});

    ForecasterBank bank(cfg);
    bank.restart_time_ = doc.at("restart_time").get<Time>();
    bank.t_ = doc.at("t").get<Time>();
    bank.log_W_prev_ = doc.at("log_W_prev").get<double>();
    bank.starts_.clear();
    bank.log_weights_.clear();
    bank.counts_.clear();
    for (const auto& f : doc.at("forecasters")) {
        const auto counts = f.at("counts").get<std::vector<Count>>();
        if (counts.size() != static_cast<std::size_t>(cfg.alphabet_size))
            throw std::invalid_argument("forecaster counts do not match the alphabet size");
        bank.starts_.push_back(f.at("start").get<Time>());
        bank.log_weights_.push_back(f.at("log_weight").get<double>());
        bank.counts_.insert(bank.counts_.end(), counts.begin(), counts.end());
    }
    if (bank.starts_.empty() || bank.starts_.front() != bank.restart_time_)
        throw std::invalid_argument("detector state lacks the forecaster anchored at the restart time");
    if (bank.t_ < bank.restart_time_ - 1) throw std::invalid_argument("detector time precedes its restart time");
    bank.ensure_tables(bank.t_ - bank.restart_time_ + 2);
    return bank;
}

// ---------------------------------------------------------------------------

double f_term(Time r, Time s, Time t, int alphabet_size) {
    check_order(r, s, t, true);
    if (alphabet_size < 2) throw std::domain_error("alphabet size must be at least 2");
    const double n1 = static_cast<double>(s - r);
    const double n2 = static_cast<double>(t - s + 1);
    const double n = static_cast<double>(t - r + 1);
    double f = 0.0;
    for (int i = 1; i < alphabet_size; ++i) f += std::log(n1 + i) + std::log((n2 + i) / (n + i));
    f -= 0.5 * (alphabet_size - 1) * std::log(n2 / n);
    f -= std::lgamma(static_cast<double>(alphabet_size));
    return f;
}

double concentration_radius(Time r, Time s, Time t, double delta) {
    check_order(r, s, t, true);
    check_delta(delta);
    const double n1 = static_cast<double>(s - r);      // n_{r:s-1}
    const double n1p = static_cast<double>(s - r + 1); // n_{r:s}
    const double n2 = static_cast<double>(t - s + 1);  // n_{s:t}
    const double n = static_cast<double>(t - r + 1);   // n_{r:t}
    const double log_n = std::log(n);
    const double before = (1.0 + 1.0 / n1) / n1 * std::log(2.0 * std::sqrt(n1p) / delta);
    const double after =
        (1.0 + 1.0 / n2) / n2 * std::log(2.0 * n * std::sqrt(n2 + 1.0) * log_n * log_n / (std::numbers::ln2 * delta));
    return std::numbers::sqrt2 / 2.0 * (std::sqrt(before) + std::sqrt(after));
}

double log_false_alarm_eta_upper_bound(Count n1, Count n2, double delta, const TheoryParams& theory,
                                       int alphabet_size) {
    if (n1 < 1 || n2 < 1) throw std::domain_error("split lengths must be at least 1");
    check_delta(delta);
    if (!(theory.alpha > 1.0)) throw std::domain_error("alpha must exceed 1");
    if (alphabet_size < 2) throw std::domain_error("alphabet size must be at least 2");
    const double a = static_cast<double>(n1);
    const double b = static_cast<double>(n2);
    const double n = a + b;
    const double alpha = theory.alpha;
    double log_product = 0.0;
    for (int i = 1; i < alphabet_size; ++i) log_product += std::log(a + i) + std::log(b + i) - std::log(n + i);
    const double log_scale = 2.0 * theory.b1 - 0.5 * (alphabet_size - 1) * (std::log(a) + std::log(b)) -
                             std::lgamma(static_cast<double>(alphabet_size));
    const double log_tail = alpha * (std::log(std::log(4.0 * alpha + 2.0)) + 2.0 * std::log(delta) -
                                     std::log(4.0 * n) - std::log(std::log((alpha + 3.0) * n)));
    return log_product + log_scale + log_tail;
}

double false_alarm_eta_upper_bound(Count n1, Count n2, double delta, const TheoryParams& theory,
                                   int alphabet_size) {
    return std::exp(log_false_alarm_eta_upper_bound(n1, n2, delta, theory, alphabet_size));
}

std::optional<Count> delay_bound(std::span<const double> gaps, Time r, Time c, const DetectorConfig& config,
                                 std::optional<Count> cap) {
    if (gaps.empty()) throw std::domain_error("gap vector is empty");
    for (double g : gaps)
        if (!(g >= 0.0 && g <= 1.0)) throw std::domain_error("gaps must lie in [0, 1]");
    if (static_cast<int>(gaps.size()) != config.alphabet_size)
        throw std::domain_error("gap vector length must equal the alphabet size");
    if (!(r < c) || r < 1) throw std::domain_error("delay bound requires 1 <= r < c");
    config.validate();

    const Count before = c - r; // n_{r:c-1}
    const Count limit = cap.value_or(10 * before + 10000);
    for (Count d = 1; d <= limit; ++d) {
        const Time t = c + d - 1;
        const double radius = concentration_radius(r, c, t, config.delta);
        double aggregate = 0.0;
        for (double g : gaps) {
            const double excess = g - radius;
            if (excess > 0.0) aggregate += excess * excess;
        }
        if (!(aggregate > 0.0)) continue;
        const double le = log_eta(r, c, t, config);
        const double f = f_term(r, c, t, config.alphabet_size);
        const double denominator = 1.0 + 2.0 * (le - f) / (static_cast<double>(before) * aggregate);
        if (!(denominator > 0.0)) continue;
        const double threshold = 2.0 / aggregate * (-le + f) / denominator;
        if (static_cast<double>(d) > threshold) return d;
    }
    return std::nullopt;
}

} // namespace nsrl::cpd
