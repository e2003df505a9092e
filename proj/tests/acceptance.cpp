// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--criterion N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nsrl/bench.hpp"
#include "nsrl/cpd.hpp"
#include "nsrl/random.hpp"
#include "oracles.hpp"

using namespace nsrl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

std::vector<double> dirichlet(Rng& rng, int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& x : p) total += (x = rng.exponential());
    for (auto& x : p) x /= total;
    return p;
}

oracle::Mdp to_oracle(const envs::MdpSpec& m) { return {m.states, m.actions, m.kernel, m.mean_rewards}; }

// ---------------------------------------------------------------------------

Outcome closed_form_loss() {
    Rng rng(1);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int O = 2 + static_cast<int>(rng.below(5));
        const int len = 1 + static_cast<int>(rng.below(15));
        cpd::Forecaster f;
        f.symbol_counts.assign(static_cast<std::size_t>(O), 0);
        std::vector<int> seq;
        double total = 0.0;
        for (int i = 0; i < len; ++i) {
            const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(O)));
            seq.push_back(x);
            total += cpd::forecaster_loss(f, x);
            ++f.symbol_counts[static_cast<std::size_t>(x)];
            ++f.n;
        }
        const double closed = cpd::closed_form_cumulative_loss(f.symbol_counts, f.n, O);
        worst = std::max(worst, std::abs(total - closed));
        worst = std::max(worst, std::abs(oracle::sequential_loss(seq, O) - closed));
    }
    return {worst <= 1e-9, "max |sequential - closed form| = " + fmt(worst)};
}

Outcome false_alarms() {
    bool ok = true;
    std::string detail;
    for (double delta : {0.1, 0.05})
        for (int O : {2, 4}) {
            cpd::DetectorConfig cfg;
            cfg.alphabet_size = O;
            cfg.delta = delta;
            cfg.eta_schedule = cpd::EtaKind::reciprocal;
            const int streams = 1000;
            int alarms = 0;
            for (int i = 0; i < streams; ++i) {
                Rng rng(splitmix64(static_cast<std::uint64_t>(i) * 131 + static_cast<std::uint64_t>(O) * 7 +
                                   (delta < 0.07 ? 1 : 0)));
                const auto theta = dirichlet(rng, O);
                cpd::ForecasterBank bank(cfg);
                for (int t = 0; t < 2000; ++t)
                    if (bank.step(rng.categorical(theta)).restarted) {
                        ++alarms;
                        break;
                    }
            }
            const double rate = alarms / double(streams);
            const double limit = delta + 3 * std::sqrt(delta * (1 - delta) / streams);
            ok = ok && rate <= limit;
            detail += " [delta=" + fmt(delta) + " O=" + std::to_string(O) + " rate=" + fmt(rate) + " limit=" +
                      fmt(limit) + "]";
        }
    return {ok, "reciprocal eta:" + detail};
}

// Same experiment with the default (theory) schedule; informational only.
std::string false_alarms_theory() {
    std::string detail;
    for (double delta : {0.1, 0.05})
        for (int O : {2, 4}) {
            cpd::DetectorConfig cfg;
            cfg.alphabet_size = O;
            cfg.delta = delta;
            int alarms = 0;
            for (int i = 0; i < 1000; ++i) {
                Rng rng(splitmix64(static_cast<std::uint64_t>(i) * 131 + static_cast<std::uint64_t>(O) * 7 +
                                   (delta < 0.07 ? 1 : 0)));
                const auto theta = dirichlet(rng, O);
                cpd::ForecasterBank bank(cfg);
                for (int t = 0; t < 2000; ++t)
                    if (bank.step(rng.categorical(theta)).restarted) {
                        ++alarms;
                        break;
                    }
            }
            detail += " [delta=" + fmt(delta) + " O=" + std::to_string(O) + " rate=" + fmt(alarms / 1000.0) + "]";
        }
    return detail;
}

Outcome detection_delay() {
    bool ok = true;
    std::string detail;
    const std::vector<double> gaps = {0.4, 0.6, 0.8};
    std::vector<double> mean_delay, sum_sq;
    cpd::DetectorConfig cfg;
    cfg.alphabet_size = 2;
    cfg.delta = 0.05;
    for (double g : gaps) {
        const std::vector<double> before = {0.5 + g / 2, 0.5 - g / 2};
        const std::vector<double> after = {0.5 - g / 2, 0.5 + g / 2};
        const auto bound = cpd::delay_bound(std::vector<double>{g, g}, 1, 1001, cfg);
        int post = 0;
        double total = 0.0;
        for (int i = 0; i < 200; ++i) {
            Rng rng(90'000 + static_cast<std::uint64_t>(i) + static_cast<std::uint64_t>(g * 1000) * 1000);
            cpd::ForecasterBank bank(cfg);
            cpd::Time detected = 0;
            for (cpd::Time t = 1; t <= 1000 + 20000 && detected == 0; ++t) {
                const int x = rng.categorical(t <= 1000 ? before : after);
                if (bank.step(x).restarted) detected = t;
            }
            if (detected > 1000) {
                ++post;
                total += static_cast<double>(detected - 1001 + 1);
            }
        }
        const double mean = post ? total / post : INFINITY;
        mean_delay.push_back(mean);
        sum_sq.push_back(2 * g * g);
        const bool within = bound && mean <= static_cast<double>(*bound);
        ok = ok && post >= 198 && within;
        detail += " [sum_sq=" + fmt(2 * g * g) + " post=" + std::to_string(post) + "/200 mean=" + fmt(mean) +
                  " bound=" + (bound ? std::to_string(*bound) : std::string("none")) + "]";
    }
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i) ok = ok && mean_delay[i + 1] < mean_delay[i];
    for (std::size_t i = 0; i < gaps.size(); ++i)
        for (std::size_t j = i + 1; j < gaps.size(); ++j) {
            const double ratio = (mean_delay[i] / mean_delay[j]) / (sum_sq[j] / sum_sq[i]);
            ok = ok && ratio >= 0.5 && ratio <= 2.0;
            detail += " shape" + std::to_string(i) + std::to_string(j) + "=" + fmt(ratio, 3);
        }
    return {ok, detail};
}

Outcome stationary_regret() {
    bool ok = true;
    std::string detail;
    const envs::Time T = 20000;
    const double delta = 0.05;
    for (int k = 0; k < 5; ++k) {
        envs::GenConfig g;
        g.states = 5;
        g.actions = 3;
        g.smoothing_eps = 0.05;
        g.horizon = T;
        g.seed = 500 + static_cast<std::uint64_t>(k);
        const auto mdp = envs::generate_switching(g);
        const auto gains = bench::precompute_gains(mdp);
        const auto rho = bench::gain_profile(mdp, gains);
        const auto facts = bench::env_facts(mdp, gains);
        double first = 0.0, second = 0.0, final_regret = 0.0;
        for (int s = 0; s < 10; ++s) {
            const auto run = bench::run_realization(mdp, rho, {"ucrl2", "", {}}, facts, delta,
                                                    bench::realization_seed(7, static_cast<std::uint64_t>(s), "ucrl2"),
                                                    true);
            const double half = run.trace.cumulative_regret[static_cast<std::size_t>(T / 2 - 1)];
            first += half / 10;
            second += (run.final_regret - half) / 10;
            final_regret = std::max(final_regret, run.final_regret);
        }
        const double D = gains.diameter[0];
        const double bound = 34 * D * 5 * std::sqrt(3.0 * T * std::log(T / delta));
        ok = ok && second < 0.75 * first && final_regret <= bound;
        detail += " [mdp" + std::to_string(k) + " halves=" + fmt(first) + "/" + fmt(second) + " max_final=" +
                  fmt(final_regret) + " bound=" + fmt(bound) + "]";
    }
    return {ok, detail};
}

Outcome switching_benchmark() {
    bool ok = true;
    std::string detail;
    const std::vector<std::pair<int, int>> shapes = {{4, 2}, {4, 3}, {6, 2}, {6, 3}};
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        bench::ExperimentConfig c;
        c.env.states = shapes[k].first;
        c.env.actions = shapes[k].second;
        c.env.segments = 4;
        c.env.horizon = 50000;
        c.env.min_segment_len = 5000;
        c.env.seed = 2024 + k;
        c.realizations = 20;
        c.base_seed = 1;
        c.agents = {{"oracle", "", {}},
                    {"rbocpd_ucrl2", "", {}},
                    {"restarted_ucrl2", "", {}},
                    {"swucrl2", "", {{"diameter_grid", {0.01, 0.03, 0.1, 0.3, 1, 3, 10}}}},
                    {"swucrl2_cw", "", {}},
                    {"ucrl2", "", {}}};
        const auto res = bench::run_experiment(c);
        if (!res.failures.empty()) return {false, "run failure: " + res.failures.front().message};
        std::map<std::string, double> final;
        for (const auto& a : res.agents) final[a.tag] = a.mean_reward.back();
        const double oracle = final["oracle"], ours = final["rbocpd_ucrl2"];
        bool here = oracle >= ours && ours >= 0.9 * oracle;
        for (const char* other : {"restarted_ucrl2", "swucrl2", "swucrl2_cw", "ucrl2"}) here = here && ours >= final[other];
        ok = ok && here;
        detail += " [O=" + std::to_string(shapes[k].first) + " A=" + std::to_string(shapes[k].second);
        for (const auto& [tag, v] : final) detail += " " + tag + "=" + fmt(v, 6);
        detail += "]";
    }
    return {ok, detail};
}

Outcome oracle_equivalences() {
    Rng rng(6);
    double worst_inner = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(3));
        const auto p = dirichlet(rng, n);
        const double radius = 2.5 * rng.uniform();
        std::vector<double> u(static_cast<std::size_t>(n));
        for (auto& x : u) x = rng.uniform();
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return u[a] > u[b]; });
        const auto q = ucrl::inner_max_transition(p, radius, order);
        double mine = 0.0;
        for (int i = 0; i < n; ++i) mine += q[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
        worst_inner = std::max(worst_inner, std::abs(mine - oracle::brute_force_inner_max(p, radius, u)));
    }
    double worst_gain = 0.0, worst_diam = 0.0;
    for (int k = 0; k < 20; ++k) {
        envs::GenConfig g;
        g.states = 3;
        g.actions = 2;
        g.smoothing_eps = 0.05;
        Rng r(700 + static_cast<std::uint64_t>(k));
        const auto m = envs::generate_mdp(g, r);
        worst_gain = std::max(worst_gain, std::abs(envs::optimal_gain(m).rho - oracle::brute_force_gain(to_oracle(m))));
        worst_diam = std::max(worst_diam, std::abs(envs::diameter(m) - oracle::brute_force_diameter(to_oracle(m))));
    }
    return {worst_inner <= 1e-9 && worst_gain <= 1e-6 && worst_diam <= 1e-6,
            "inner_max=" + fmt(worst_inner) + " gain=" + fmt(worst_gain) + " diameter=" + fmt(worst_diam)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism() {
    const auto dir = fs::temp_directory_path() / "nsrl_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const nlohmann::json cfg = {
        {"env", {{"generate", {{"states", 4}, {"actions", 2}, {"segments", 3}, {"horizon", 5000}, {"min_segment_len", 500}, {"seed", 3}}}}},
        {"agents",
         {{{"type", "ucrl2"}},
          {{"type", "oracle"}},
          {{"type", "restarted_ucrl2"}},
          {{"type", "swucrl2"}, {"params", {{"diameter_grid", {0.1, 1}}}}},
          {{"type", "swucrl2_cw"}},
          {{"type", "rbocpd_ucrl2"}}}},
        {"realizations", 4},
        {"base_seed", 17},
    };
    std::ofstream(dir / "cfg.json") << cfg.dump(2);
    for (const char* out : {"a", "b"}) {
        const std::string cmd = std::string(NSRL_CLI) + " run -q --config " + (dir / "cfg.json").string() + " --out " +
                                (dir / out).string() + (out[0] == 'a' ? " --workers 1" : " --workers 4") + " >/dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, "cli run failed"};
    }
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        const auto ext = e.path().extension();
        if (ext != ".csv" && ext != ".json") continue;
        if (slurp(e.path()) != slurp(dir / "b" / e.path().filename()))
            return {false, e.path().filename().string() + " differs"};
        ++compared;
    }
    fs::remove_all(dir);
    return {compared == 8, std::to_string(compared) + " files byte-identical"};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> which;
    app.add_option("--criterion", which, "Criterion number(s) to run (default: all)")->check(CLI::Range(1, 7));
    CLI11_PARSE(app, argc, argv);
    if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7};

    const std::map<int, std::pair<std::string, std::function<Outcome()>>> checks = {
        {1, {"closed-form loss", closed_form_loss}},
        {2, {"false-alarm rate", false_alarms}},
        {3, {"detection delay", detection_delay}},
        {4, {"UCRL2 stationary regret", stationary_regret}},
        {5, {"switching benchmark", switching_benchmark}},
        {6, {"oracle equivalences", oracle_equivalences}},
        {7, {"determinism", determinism}},
    };
    bool all = true;
    for (int n : which) {
        const auto& [name, fn] = checks.at(n);
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << "criterion " << n << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << " " << o.detail
                  << " time=" << fmt(secs, 3) << "s" << std::endl;
        if (n == 2) std::cout << "  info: default theory schedule:" << false_alarms_theory() << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
