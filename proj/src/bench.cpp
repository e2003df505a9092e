#include "nsrl/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <system_error>
#include <thread>

#include "nsrl/random.hpp"

namespace nsrl::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kResultsFormat = "nsrl.bench.results";
constexpr const char* kMetadataFormat = "nsrl.bench.metadata";
constexpr int kVersion = 1;

json gen_config_json(const envs::GenConfig& g) {
    return {{"states", g.states},
            {"actions", g.actions},
            {"segments", g.segments},
            {"horizon", g.horizon},
            {"min_segment_len", g.min_segment_len},
            {"smoothing_eps", g.smoothing_eps},
            {"reward_variation", g.reward_variation},
            {"seed", g.seed}};
}

envs::GenConfig gen_config_from(const json& doc) {
    envs::GenConfig g;
    g.states = doc.value("states", g.states);
    g.actions = doc.value("actions", g.actions);
    g.segments = doc.value("segments", g.segments);
    g.horizon = doc.value("horizon", g.horizon);
    g.min_segment_len = doc.value("min_segment_len", g.min_segment_len);
    g.smoothing_eps = doc.value("smoothing_eps", g.smoothing_eps);
    g.reward_variation = doc.value("reward_variation", g.reward_variation);
    g.seed = doc.value("seed", g.seed);
    return g;
}

// Shortest round-trip representation; identical bytes on every run.
void put_number(std::string& out, double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    out.append(buf, res.ptr);
}

void put_fixed(std::string& out, double x, int digits) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, digits);
    out.append(buf, res.ptr);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << content;
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

} // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (realizations < 1) throw std::invalid_argument("realizations must be at least 1");
    if (agents.empty()) throw std::invalid_argument("agent list is empty");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
    if (workers < 0) throw std::invalid_argument("workers must be non-negative");
    if (pilot_realizations < 1) throw std::invalid_argument("pilot_realizations must be at least 1");
    if (env_path.empty()) env.validate();
    std::vector<std::string> tags;
    for (const auto& a : agents) tags.push_back(a.label());
    std::sort(tags.begin(), tags.end());
    if (std::adjacent_find(tags.begin(), tags.end()) != tags.end())
        throw std::invalid_argument("agent tags must be unique");
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    ExperimentConfig c;
    static const std::set<std::string> known = {"env",   "agents",     "realizations", "base_seed",
                                                "delta", "output_dir", "workers",      "pilot_realizations"};
    for (const auto& [key, value] : doc.items())
        if (!known.count(key)) throw std::invalid_argument("unknown experiment key '" + key + "'");
    if (doc.contains("env")) {
        const auto& env = doc.at("env");
        if (env.is_string()) c.env_path = env.get<std::string>();
        else if (env.contains("path")) c.env_path = env.at("path").get<std::string>();
        else c.env = gen_config_from(env.contains("generate") ? env.at("generate") : env);
    }
    for (const auto& a : doc.at("agents")) c.agents.push_back(agents::AgentConfig::from_json(a));
    c.realizations = doc.value("realizations", c.realizations);
    c.base_seed = doc.value("base_seed", c.base_seed);
    c.delta = doc.value("delta", c.delta);
    c.output_dir = doc.value("output_dir", c.output_dir);
    c.workers = doc.value("workers", c.workers);
    c.pilot_realizations = doc.value("pilot_realizations", c.pilot_realizations);
    c.validate();
    return c;
}

json ExperimentConfig::to_json() const {
    json doc;
    if (env_path.empty()) doc["env"] = {{"generate", gen_config_json(env)}};
    else doc["env"] = {{"path", env_path}};
    doc["agents"] = json::array();
    for (const auto& a : agents) doc["agents"].push_back(a.to_json());
    doc["realizations"] = realizations;
    doc["base_seed"] = base_seed;
    doc["delta"] = delta;
    doc["output_dir"] = output_dir;
    doc["pilot_realizations"] = pilot_realizations;
    return doc;
}

json GainTable::to_json() const { return {{"rho", rho}, {"diameter", diameter}, {"max_diameter", max_diameter}}; }

GainTable precompute_gains(const envs::SwitchingMdp& mdp, double tol) {
    GainTable out;
    for (const auto& seg : mdp.segments) {
        out.rho.push_back(envs::optimal_gain(seg, tol).rho);
        out.diameter.push_back(envs::diameter(seg, tol));
        out.max_diameter = std::max(out.max_diameter, out.diameter.back());
    }
    return out;
}

std::vector<double> gain_profile(const envs::SwitchingMdp& mdp, const GainTable& gains) {
    std::vector<double> rho;
    rho.reserve(static_cast<std::size_t>(mdp.horizon()));
    for (std::size_t l = 0; l < mdp.segment_count(); ++l)
        rho.insert(rho.end(), static_cast<std::size_t>(mdp.segment_length(l)), gains.rho[l]);
    return rho;
}

agents::EnvFacts env_facts(const envs::SwitchingMdp& mdp, const GainTable& gains) {
    agents::EnvFacts f;
    f.states = mdp.states();
    f.actions = mdp.actions();
    f.horizon = mdp.horizon();
    f.segments = static_cast<int>(mdp.segment_count());
    f.change_points = mdp.change_points;
    f.diameter = gains.max_diameter;
    f.budgets = agents::variation_budgets(mdp);
    return f;
}

std::uint64_t realization_seed(std::uint64_t base_seed, std::uint64_t index, const std::string& tag) {
    return base_seed ^ splitmix64(splitmix64(index) ^ fnv1a(tag));
}

json RunResult::summary_json() const {
    return {{"agent", agent},         {"realization", realization}, {"seed", seed},
            {"final_reward", final_reward}, {"final_regret", final_regret}, {"episodes", episodes},
            {"restarts", restarts}};
}

RunResult run_realization(const envs::SwitchingMdp& mdp, const std::vector<double>& rho_profile,
                          const agents::AgentConfig& agent_config, const agents::EnvFacts& facts, double delta,
                          std::uint64_t seed, bool keep_steps) {
    const auto started = std::chrono::steady_clock::now();
    auto agent = agents::make_agent(agent_config, facts, delta);
    envs::Environment env(mdp, seed);
    const auto T = static_cast<std::size_t>(mdp.horizon());
    if (rho_profile.size() != T) throw std::invalid_argument("gain profile does not match the horizon");

    RunResult out;
    out.agent = agent_config.label();
    out.seed = seed;
    auto& tr = out.trace;
    tr.cumulative_reward.resize(T);
    if (keep_steps) {
        tr.reward.resize(T);
        tr.rho = rho_profile;
        tr.cumulative_regret.resize(T);
    }
    double total = 0.0;
    double regret = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        const envs::State o = env.state();
        const envs::Action a = agent->act(o);
        const auto step = env.step(a);
        agent->observe(o, a, step.reward, step.next_state);
        total += step.reward;
        regret += rho_profile[i] - step.reward;
        tr.cumulative_reward[i] = total;
        if (keep_steps) {
            tr.reward[i] = step.reward;
            tr.cumulative_regret[i] = regret;
        }
    }
    out.final_reward = total;
    out.final_regret = regret;
    out.restarts = agent->restart_times();
    out.episodes = agent->episodes();
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

void aggregate(AgentSummary& summary, const std::vector<RunResult>& runs, Time horizon) {
    const auto T = static_cast<std::size_t>(horizon);
    summary.mean_reward.assign(T, 0.0);
    summary.stderr_reward.assign(T, 0.0);
    summary.mean_regret.assign(T, 0.0);
    if (runs.empty()) return;
    const double n = static_cast<double>(runs.size());
    for (const auto& r : runs)
        for (std::size_t i = 0; i < T; ++i) summary.mean_reward[i] += r.trace.cumulative_reward[i];
    for (auto& m : summary.mean_reward) m /= n;
    if (runs.size() > 1) {
        for (const auto& r : runs)
            for (std::size_t i = 0; i < T; ++i) {
                const double d = r.trace.cumulative_reward[i] - summary.mean_reward[i];
                summary.stderr_reward[i] += d * d;
            }
        for (auto& s : summary.stderr_reward) s = std::sqrt(s / (n - 1.0) / n);
    }
    // mean of (prefix rho - prefix reward) over runs
    double rho_prefix = 0.0;
    const auto& first = runs.front().trace;
    for (std::size_t i = 0; i < T; ++i) {
        if (!first.rho.empty()) rho_prefix += first.rho[i];
        summary.mean_regret[i] = rho_prefix - summary.mean_reward[i];
    }
}

envs::SwitchingMdp load_or_generate(const ExperimentConfig& config) {
    if (config.env_path.empty()) return envs::generate_switching(config.env);
    return envs::SwitchingMdp::from_json(read_json(config.env_path));
}

namespace {

// Runs jobs(i) for i in [0, n) over `workers` threads; errors are collected per job.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
    std::size_t count = workers > 0 ? static_cast<std::size_t>(workers) : std::thread::hardware_concurrency();
    count = std::clamp<std::size_t>(count, 1, std::max<std::size_t>(1, n));
    if (count == 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < count; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) job(i);
        });
    for (auto& th : pool) th.join();
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const Progress& progress) {
    config.validate();
    ExperimentResult result;
    result.config = config;
    result.mdp = load_or_generate(config);
    result.gains = precompute_gains(result.mdp);
    const auto facts = env_facts(result.mdp, result.gains);
    const auto rho = gain_profile(result.mdp, result.gains);
    std::mutex log_mutex;
    auto say = [&](const std::string& line) {
        if (!progress) return;
        std::lock_guard lock(log_mutex);
        progress(line);
    };

    // Resolve searched hyperparameters with pilot runs on seeds disjoint from
    // the evaluation lattice.
    std::vector<agents::AgentConfig> resolved_configs = config.agents;
    std::vector<json> search_notes(config.agents.size());
    for (std::size_t ai = 0; ai < resolved_configs.size(); ++ai) {
        auto& ac = resolved_configs[ai];
        if (ac.type != "swucrl2" || !ac.params.contains("diameter_grid") || ac.params.contains("window") ||
            ac.params.contains("diameter"))
            continue;
        const auto grid = ac.params.at("diameter_grid").get<std::vector<double>>();
        if (grid.empty()) throw std::invalid_argument("diameter_grid is empty");
        const auto pilots = static_cast<std::size_t>(config.pilot_realizations);
        std::vector<double> finals(grid.size() * pilots);
        parallel_for(finals.size(), config.workers, [&](std::size_t job) {
            auto probe = ac;
            probe.params.erase("diameter_grid");
            probe.params["diameter"] = grid[job / pilots];
            const auto seed = realization_seed(config.base_seed, job % pilots, ac.label() + "/pilot");
            finals[job] = run_realization(result.mdp, rho, probe, facts, config.delta, seed).final_reward;
        });
        std::size_t best = 0;
        std::vector<double> scores(grid.size(), 0.0);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            for (std::size_t j = 0; j < pilots; ++j) scores[g] += finals[g * pilots + j];
            scores[g] /= static_cast<double>(pilots);
            if (scores[g] > scores[best]) best = g;
        }
        ac.params.erase("diameter_grid");
        ac.params["diameter"] = grid[best];
        search_notes[ai] = {{"diameter_grid", grid}, {"pilot_mean_final_reward", scores}, {"chosen_diameter", grid[best]}};
        say(ac.label() + ": diameter " + std::to_string(grid[best]) + " chosen by pilot runs");
    }

    const auto R = static_cast<std::size_t>(config.realizations);
    const std::size_t jobs = resolved_configs.size() * R;
    std::vector<std::optional<RunResult>> slots(jobs);
    std::vector<std::string> errors(jobs);
    std::vector<std::uint64_t> seeds(jobs);
    std::atomic<std::size_t> done{0};
    parallel_for(jobs, config.workers, [&](std::size_t job) {
        const auto& ac = resolved_configs[job / R];
        const std::size_t i = job % R;
        seeds[job] = realization_seed(config.base_seed, i, ac.label());
        try {
            auto run = run_realization(result.mdp, rho, ac, facts, config.delta, seeds[job]);
            run.realization = i;
            slots[job] = std::move(run);
        } catch (const std::exception& e) {
            errors[job] = e.what();
        }
        const std::size_t finished = ++done;
        say("[" + std::to_string(finished) + "/" + std::to_string(jobs) + "] " + ac.label() + " #" + std::to_string(i) +
            (errors[job].empty() ? "" : " FAILED: " + errors[job]));
    });

    for (std::size_t ai = 0; ai < resolved_configs.size(); ++ai) {
        AgentSummary summary;
        summary.tag = resolved_configs[ai].label();
        summary.config = config.agents[ai];
        agents::make_agent(resolved_configs[ai], facts, config.delta, &summary.resolved);
        if (!search_notes[ai].is_null()) summary.resolved["search"] = search_notes[ai];
        std::vector<RunResult> runs;
        for (std::size_t i = 0; i < R; ++i) {
            const std::size_t job = ai * R + i;
            if (slots[job]) {
                runs.push_back(std::move(*slots[job]));
                runs.back().trace.rho = rho;
            } else {
                result.failures.push_back({summary.tag, seeds[job], errors[job]});
            }
        }
        aggregate(summary, runs, result.mdp.horizon());
        for (auto& r : runs) r.trace = {};
        summary.runs = std::move(runs);
        result.agents.push_back(std::move(summary));
    }
    return result;
}

// ---------------------------------------------------------------------------

std::string render_svg(const std::vector<AgentSummary>& agents, Time horizon) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                    "#7f7f7f"};
    const double width = 900, height = 560;
    const double left = 80, right = 200, top = 30, bottom = 60;
    const double pw = width - left - right, ph = height - top - bottom;
    double ymax = 1.0;
    for (const auto& a : agents)
        if (!a.mean_reward.empty()) ymax = std::max(ymax, a.mean_reward.back());
    const double T = static_cast<double>(std::max<Time>(1, horizon));
    auto X = [&](double t) { return left + pw * t / T; };
    auto Y = [&](double v) { return top + ph * (1.0 - v / ymax); };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"560\" viewBox=\"0 0 900 560\">\n";
    s += "<rect width=\"900\" height=\"560\" fill=\"white\"/>\n";
    s += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    // axes and ticks
    s += "<line x1=\"80\" y1=\"500\" x2=\"700\" y2=\"500\" stroke=\"black\"/>\n";
    s += "<line x1=\"80\" y1=\"30\" x2=\"80\" y2=\"500\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double t = T * k / 5.0, v = ymax * k / 5.0;
        s += "<text x=\"";
        put_fixed(s, X(t), 1);
        s += "\" y=\"518\" text-anchor=\"middle\">";
        put_fixed(s, t, 0);
        s += "</text>\n<text x=\"72\" y=\"";
        put_fixed(s, Y(v) + 4, 1);
        s += "\" text-anchor=\"end\">";
        put_fixed(s, v, 0);
        s += "</text>\n<line x1=\"80\" x2=\"700\" y1=\"";
        put_fixed(s, Y(v), 1);
        s += "\" y2=\"";
        put_fixed(s, Y(v), 1);
        s += "\" stroke=\"#dddddd\"/>\n";
    }
    s += "<text x=\"390\" y=\"545\" text-anchor=\"middle\">t</text>\n";
    s += "<text x=\"20\" y=\"265\" text-anchor=\"middle\" transform=\"rotate(-90 20 265)\">mean cumulative reward</text>\n";

    for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto& a = agents[i];
        const char* color = palette[i % (sizeof palette / sizeof palette[0])];
        const std::size_t n = a.mean_reward.size();
        const std::size_t stride = std::max<std::size_t>(1, n / 600);
        s += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"";
        s += color;
        s += "\" points=\"";
        put_fixed(s, X(0), 1);
        s += ',';
        put_fixed(s, Y(0), 1);
        for (std::size_t j = 0; j < n; j += stride) {
            const std::size_t k = std::min(n - 1, j + stride - 1);
            s += ' ';
            put_fixed(s, X(static_cast<double>(k + 1)), 1);
            s += ',';
            put_fixed(s, Y(a.mean_reward[k]), 1);
        }
        s += "\"/>\n";
        const double ly = top + 20.0 * static_cast<double>(i) + 10.0;
        s += "<line x1=\"715\" x2=\"740\" y1=\"";
        put_fixed(s, ly, 1);
        s += "\" y2=\"";
        put_fixed(s, ly, 1);
        s += "\" stroke-width=\"2\" stroke=\"";
        s += color;
        s += "\"/>\n<text x=\"746\" y=\"";
        put_fixed(s, ly + 4, 1);
        s += "\">";
        s += a.tag;
        s += "</text>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

namespace {

void write_agent_csv(const AgentSummary& a, const fs::path& path) {
    std::string s = "t,mean_cumulative_reward,stderr_cumulative_reward,mean_cumulative_regret\n";
    s.reserve(a.mean_reward.size() * 48);
    for (std::size_t i = 0; i < a.mean_reward.size(); ++i) {
        s += std::to_string(i + 1);
        s += ',';
        put_number(s, a.mean_reward[i]);
        s += ',';
        put_number(s, a.stderr_reward[i]);
        s += ',';
        put_number(s, a.mean_regret[i]);
        s += '\n';
    }
    write_file(path, s);
}

} // namespace

void emit_outputs(const ExperimentResult& result, const fs::path& dir) {
    if (result.agents.empty()) throw std::invalid_argument("nothing to emit");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

    json meta;
    meta["format"] = kMetadataFormat;
    meta["version"] = kVersion;
    meta["config"] = result.config.to_json();
    meta["config"].erase("output_dir"); // where the files went is not part of the experiment
    meta["environment"] = result.mdp.to_json();
    meta["gains"] = result.gains.to_json();
    const auto budgets = agents::variation_budgets(result.mdp);
    meta["variation_budgets"] = {{"transitions", budgets.transitions}, {"rewards", budgets.rewards}};
    meta["agents"] = json::array();
    json curves;
    curves["format"] = kResultsFormat;
    curves["version"] = kVersion;
    curves["horizon"] = result.mdp.horizon();
    curves["agents"] = json::array();
    for (const auto& a : result.agents) {
        json entry{{"tag", a.tag}, {"config", a.config.to_json()}, {"resolved", a.resolved}, {"runs", json::array()}};
        double mean_final = 0.0;
        for (const auto& r : a.runs) {
            entry["runs"].push_back(r.summary_json());
            mean_final += r.final_reward;
        }
        if (!a.runs.empty()) mean_final /= static_cast<double>(a.runs.size());
        entry["mean_final_reward"] = mean_final;
        entry["mean_final_regret"] = a.mean_regret.empty() ? 0.0 : a.mean_regret.back();
        meta["agents"].push_back(entry);
        curves["agents"].push_back({{"tag", a.tag},
                                    {"mean_reward", a.mean_reward},
                                    {"stderr_reward", a.stderr_reward},
                                    {"mean_regret", a.mean_regret}});
        write_agent_csv(a, dir / (a.tag + ".csv"));
    }
    meta["failures"] = json::array();
    for (const auto& f : result.failures)
        meta["failures"].push_back({{"agent", f.agent}, {"seed", f.seed}, {"message", f.message}});
    write_file(dir / "metadata.json", meta.dump(2) + "\n");
    write_file(dir / "results.json", curves.dump() + "\n");
    write_file(dir / "cumulative_reward.svg", render_svg(result.agents, result.mdp.horizon()));
}

ExperimentResult load_results(const fs::path& dir) {
    const json meta = read_json(dir / "metadata.json");
    const json curves = read_json(dir / "results.json");
    if (meta.value("format", std::string{}) != kMetadataFormat || curves.value("format", std::string{}) != kResultsFormat)
        throw std::runtime_error(dir.string() + " does not hold experiment outputs");
    if (meta.at("version").get<int>() != kVersion || curves.at("version").get<int>() != kVersion)
        throw std::runtime_error("unsupported results version in " + dir.string());
    ExperimentResult out;
    out.config = ExperimentConfig::from_json(meta.at("config"));
    out.mdp = envs::SwitchingMdp::from_json(meta.at("environment"));
    out.gains.rho = meta.at("gains").at("rho").get<std::vector<double>>();
    out.gains.diameter = meta.at("gains").at("diameter").get<std::vector<double>>();
    out.gains.max_diameter = meta.at("gains").at("max_diameter").get<double>();
    const auto& agent_meta = meta.at("agents");
    const auto& agent_curves = curves.at("agents");
    if (agent_meta.size() != agent_curves.size()) throw std::runtime_error("metadata and results disagree on agents");
    for (std::size_t i = 0; i < agent_meta.size(); ++i) {
        AgentSummary a;
        a.tag = agent_meta[i].at("tag").get<std::string>();
        a.config = agents::AgentConfig::from_json(agent_meta[i].at("config"));
        a.resolved = agent_meta[i].at("resolved");
        a.mean_reward = agent_curves[i].at("mean_reward").get<std::vector<double>>();
        a.stderr_reward = agent_curves[i].at("stderr_reward").get<std::vector<double>>();
        a.mean_regret = agent_curves[i].at("mean_regret").get<std::vector<double>>();
        for (const auto& r : agent_meta[i].at("runs")) {
            RunResult run;
            run.agent = r.at("agent").get<std::string>();
            run.realization = r.at("realization").get<std::size_t>();
            run.seed = r.at("seed").get<std::uint64_t>();
            run.final_reward = r.at("final_reward").get<double>();
            run.final_regret = r.at("final_regret").get<double>();
            run.episodes = r.at("episodes").get<std::int64_t>();
            run.restarts = r.at("restarts").get<std::vector<Time>>();
            a.runs.push_back(std::move(run));
        }
        out.agents.push_back(std::move(a));
    }
    for (const auto& f : meta.at("failures"))
        out.failures.push_back({f.at("agent").get<std::string>(), f.at("seed").get<std::uint64_t>(),
                                f.at("message").get<std::string>()});
    return out;
}

} // namespace nsrl::bench
