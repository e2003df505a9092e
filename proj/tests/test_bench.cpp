#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "nsrl/bench.hpp"

using namespace nsrl;
using namespace nsrl::bench;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(int realizations = 3) {
    ExperimentConfig c;
    c.env.states = 3;
    c.env.actions = 2;
    c.env.segments = 2;
    c.env.horizon = 2000;
    c.env.min_segment_len = 500;
    c.env.seed = 11;
    c.realizations = realizations;
    c.base_seed = 5;
    c.workers = 1;
    for (const char* t : {"ucrl2", "oracle", "rbocpd_ucrl2", "swucrl2"}) c.agents.push_back({t, "", {}});
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("nsrl_test_bench_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("regret is the gap to the active gain") {
    const auto cfg = small_config();
    const auto mdp = load_or_generate(cfg);
    const auto gains = precompute_gains(mdp);
    const auto rho = gain_profile(mdp, gains);
    REQUIRE(rho.size() == 2000);
    CHECK(rho.front() == gains.rho[0]);
    CHECK(rho.back() == gains.rho[1]);
    const auto facts = env_facts(mdp, gains);
    const auto run = run_realization(mdp, rho, cfg.agents[2], facts, cfg.delta, 99, true);
    double total = 0.0, gap = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        total += run.trace.reward[i];
        gap += rho[i] - run.trace.reward[i];
        REQUIRE(run.trace.cumulative_reward[i] == total);
        REQUIRE(run.trace.cumulative_regret[i] == gap);
    }
    CHECK(run.final_reward == total);
    CHECK(run.final_regret == gap);
}

TEST_CASE("regret arithmetic on a constant gain") {
    RunResult r;
    r.trace.rho.assign(100, 0.8);
    r.trace.cumulative_reward.assign(100, 0.0);
    for (std::size_t i = 0; i < 100; ++i) r.trace.cumulative_reward[i] = 0.7 * static_cast<double>(i + 1);
    r.trace.cumulative_reward.back() = 70.0;
    AgentSummary s;
    aggregate(s, {r}, 100);
    CHECK(s.mean_regret.back() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(s.stderr_reward.back() == 0.0);
}

TEST_CASE("identical seeds give a zero-spread mean") {
    const auto cfg = small_config();
    const auto mdp = load_or_generate(cfg);
    const auto gains = precompute_gains(mdp);
    const auto rho = gain_profile(mdp, gains);
    const auto facts = env_facts(mdp, gains);
    auto a = run_realization(mdp, rho, cfg.agents[0], facts, cfg.delta, 3);
    auto b = run_realization(mdp, rho, cfg.agents[0], facts, cfg.delta, 3);
    CHECK(a.trace.cumulative_reward == b.trace.cumulative_reward);
    a.trace.rho = b.trace.rho = rho;
    AgentSummary s;
    aggregate(s, {a, b}, 2000);
    CHECK(s.mean_reward == a.trace.cumulative_reward);
    for (double e : s.stderr_reward) CHECK(e == 0.0);
}

TEST_CASE("seed lattice has no collisions") {
    std::set<std::uint64_t> seen;
    const char* tags[] = {"ucrl2", "oracle", "restarted_ucrl2", "swucrl2", "swucrl2_cw", "rbocpd_ucrl2"};
    for (const char* tag : tags)
        for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(realization_seed(1, i, tag));
    CHECK(seen.size() == 6000);
    CHECK(realization_seed(1, 4, "x") == realization_seed(1, 4, "x"));
    CHECK(realization_seed(1, 4, "x") != realization_seed(2, 4, "x"));
}

TEST_CASE("experiments are deterministic across worker counts") {
    auto cfg = small_config();
    const auto serial = run_experiment(cfg);
    cfg.workers = 4;
    const auto parallel = run_experiment(cfg);
    REQUIRE(serial.agents.size() == 4);
    REQUIRE(serial.failures.empty());
    for (std::size_t i = 0; i < serial.agents.size(); ++i) {
        CHECK(serial.agents[i].mean_reward == parallel.agents[i].mean_reward);
        CHECK(serial.agents[i].stderr_reward == parallel.agents[i].stderr_reward);
        CHECK(serial.agents[i].resolved == parallel.agents[i].resolved);
        for (std::size_t r = 0; r < serial.agents[i].runs.size(); ++r)
            CHECK(serial.agents[i].runs[r].summary_json() == parallel.agents[i].runs[r].summary_json());
    }
}

TEST_CASE("outputs are complete and byte-stable") {
    const auto result = run_experiment(small_config(2));
    const auto a = scratch("a"), b = scratch("b");
    emit_outputs(result, a);
    emit_outputs(run_experiment(small_config(2)), b);
    for (const char* f : {"ucrl2.csv", "oracle.csv", "rbocpd_ucrl2.csv", "swucrl2.csv", "metadata.json", "results.json",
                          "cumulative_reward.svg"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    std::ifstream csv(a / "oracle.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "t,mean_cumulative_reward,stderr_cumulative_reward,mean_cumulative_regret");
    long rows = 1;
    std::string last;
    while (std::getline(csv, line)) {
        ++rows;
        last = line;
    }
    CHECK(rows == 2001);
    CHECK(last.rfind("2000,", 0) == 0);

    const auto back = load_results(a);
    REQUIRE(back.agents.size() == result.agents.size());
    for (std::size_t i = 0; i < back.agents.size(); ++i) {
        CHECK(back.agents[i].tag == result.agents[i].tag);
        CHECK(back.agents[i].mean_reward == result.agents[i].mean_reward);
        CHECK(back.agents[i].mean_regret == result.agents[i].mean_regret);
    }
    CHECK(back.mdp == result.mdp);
    CHECK(render_svg(back.agents, back.mdp.horizon()) == slurp(a / "cumulative_reward.svg"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("config validation") {
    auto cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    const auto back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    cfg.realizations = 0;
    CHECK_THROWS(cfg.validate());
    cfg = small_config();
    cfg.delta = 1.5;
    CHECK_THROWS(cfg.validate());
    cfg = small_config();
    cfg.agents.clear();
    CHECK_THROWS(cfg.validate());
    CHECK_THROWS(ExperimentConfig::from_json(nlohmann::json{{"agents", nlohmann::json::array()}, {"bogus", 1}}));
}

TEST_CASE("oracle regret grows sublinearly on a stationary MDP") {
    ExperimentConfig cfg;
    cfg.env.states = 3;
    cfg.env.actions = 2;
    cfg.env.horizon = 40000;
    cfg.env.seed = 3;
    cfg.realizations = 4;
    cfg.agents = {{"oracle", "", {}}};
    const auto res = run_experiment(cfg);
    const auto& reg = res.agents[0].mean_regret;
    const double early = reg[4999] / 5000.0;
    const double late = reg[39999] / 40000.0;
    CHECK(late < early);
    CHECK(late < 0.1);
}
