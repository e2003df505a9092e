#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
};

Outcome sh(const std::string& args) {
    const std::string cmd = std::string(NSRL_CLI) + " " + args + " 2>/dev/null";
    Outcome r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("nsrl_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("gen-env writes a loadable environment") {
    const auto dir = scratch("gen");
    const auto file = dir / "env.json";
    const auto r = sh("gen-env --states 4 --actions 2 --segments 3 --horizon 3000 --min-segment-len 200 --seed 9 -o " +
                      file.string());
    CHECK(r.code == 0);
    const auto doc = nlohmann::json::parse(slurp(file));
    CHECK(doc["states"] == 4);
    CHECK(doc["segments"].size() == 3);
    CHECK(doc["change_points"].back() == 3001);
    CHECK(sh("gen-env --states 4 --actions 2 --segments 3 --horizon 3000 --min-segment-len 200 --seed 9 -o -").out ==
          slurp(file));
    CHECK(sh("gen-env --segments 5 --horizon 10 --min-segment-len 5").code == 1);
    fs::remove_all(dir);
}

TEST_CASE("detect prints restart times") {
    const auto dir = scratch("detect");
    std::ofstream f(dir / "stream.txt");
    for (int i = 0; i < 400; ++i) f << 1 << '\n';
    for (int i = 0; i < 400; ++i) f << 2 << '\n';
    f.close();
    const auto r = sh("detect --alphabet 2 --delta 0.05 " + (dir / "stream.txt").string());
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    long t = 0;
    REQUIRE(static_cast<bool>(lines >> t));
    CHECK(t > 400);
    CHECK(t < 800);

    // split the stream and resume from the saved state
    std::ofstream a(dir / "a.txt"), b(dir / "b.txt");
    for (int i = 0; i < 400; ++i) a << 1 << '\n';
    for (int i = 0; i < 400; ++i) b << 2 << '\n';
    a.close();
    b.close();
    CHECK(sh("detect --alphabet 2 --state-out " + (dir / "s.json").string() + " " + (dir / "a.txt").string()).out.empty());
    CHECK(sh("detect --alphabet 2 --resume " + (dir / "s.json").string() + " " + (dir / "b.txt").string()).out == r.out);

    std::ofstream bad(dir / "bad.txt");
    bad << "1\n3\n";
    bad.close();
    CHECK(sh("detect --alphabet 2 " + (dir / "bad.txt").string()).code == 1);
    CHECK(sh("detect --alphabet 2 --delta 2 " + (dir / "a.txt").string()).code == 1);
    fs::remove_all(dir);
}

TEST_CASE("run and report") {
    const auto dir = scratch("run");
    nlohmann::json cfg = {
        {"env", {{"generate", {{"states", 3}, {"actions", 2}, {"segments", 2}, {"horizon", 1500}, {"min_segment_len", 300}, {"seed", 2}}}}},
        {"agents", {{{"type", "ucrl2"}}, {{"type", "rbocpd_ucrl2"}}}},
        {"realizations", 2},
    };
    std::ofstream(dir / "cfg.json") << cfg.dump();
    const auto r = sh("run -q --config " + (dir / "cfg.json").string() + " --out " + (dir / "out").string());
    CHECK(r.code == 0);
    CHECK(r.out.find("rbocpd_ucrl2 mean_final_reward=") != std::string::npos);
    for (const char* f : {"ucrl2.csv", "rbocpd_ucrl2.csv", "metadata.json", "results.json", "cumulative_reward.svg"})
        CHECK(fs::exists(dir / "out" / f));

    CHECK(sh("report --in " + (dir / "out").string() + " --out " + (dir / "again").string()).code == 0);
    for (const char* f : {"ucrl2.csv", "rbocpd_ucrl2.csv", "cumulative_reward.svg"})
        CHECK(slurp(dir / "out" / f) == slurp(dir / "again" / f));

    CHECK(sh("run --config " + (dir / "missing.json").string()).code == 1);
    CHECK(sh("report --in " + (dir / "nowhere").string()).code == 1);
    fs::remove_all(dir);
}
