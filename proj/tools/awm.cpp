// awm: command-line front end for synthesis, validation, serving, pooling,
// rollouts, verification and corpus statistics.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "awm/bundle.hpp"
#include "awm/errors.hpp"
#include "awm/instance_pool.hpp"
#include "awm/json_util.hpp"
#include "awm/reward.hpp"
#include "awm/rollout.hpp"
#include "awm/state_store.hpp"
#include "awm/synth.hpp"
#include "awm/verification.hpp"

namespace fs = std::filesystem;
using namespace awm;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kViolations = 2, kThreshold = 3, kInfrastructure = 4 };

class UsageError : public Error {
public:
    using Error::Error;
};

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::pair<std::string, int> split_endpoint(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw UsageError("endpoint must be host:port, got '" + endpoint + "'");
    return {endpoint.substr(0, colon), std::stoi(endpoint.substr(colon + 1))};
}

/// `dir` itself when it holds a manifest, else every child that does.
std::vector<fs::path> bundle_dirs(const fs::path& dir) {
    if (fs::exists(dir / "manifest.json")) return {dir};
    if (!fs::is_directory(dir)) throw MissingFile(dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<BundlePtr> load_bundles(const fs::path& dir) {
    std::vector<BundlePtr> out;
    for (const auto& d : bundle_dirs(dir)) out.push_back(std::make_shared<const EnvironmentBundle>(load_bundle(d)));
    if (out.empty()) throw MissingFile("no bundles under " + dir.string());
    return out;
}

/// Provisions into a scratch directory so threshold failures surface as
/// ThresholdExceeded rather than a wrapped startup failure.
void preflight(const EnvironmentBundle& bundle) {
    ProvisionOptions po;
    po.root = fs::temp_directory_path() / ("awm-preflight-" + sha256_hex(bundle_digest(bundle)).substr(0, 12));
    auto p = provision(bundle, "preflight", po);
    p.handle.discard();
    std::error_code ec;
    fs::remove_all(po.root, ec);
}

// synth

struct SynthArgs {
    std::string scenarios;
    std::string backend = "template";
    std::string endpoint = "127.0.0.1:8000";
    std::string out;
    int max_retries = 5;
    double dedup_threshold = 0.85;
};

int cmd_synth(const SynthArgs& a) {
    auto scenarios = load_scenarios(a.scenarios);
    DedupOptions dopt;
    dopt.threshold = a.dedup_threshold;
    const auto dedup = dedup_scenarios(scenarios, [](const std::string& t) { return hashed_embedding(t); }, dopt);

    std::unique_ptr<GeneratorBackend> backend;
    if (a.backend == "template") {
        backend = std::make_unique<TemplateBackend>();
    } else if (a.backend == "external") {
        const auto [host, port] = split_endpoint(a.endpoint);
        backend = std::make_unique<ExternalBackend>(host, port);
    } else {
        throw UsageError("backend must be template or external");
    }
    CorrectionPolicy policy;
    policy.max_retries = a.max_retries;

    fs::create_directories(a.out);
    std::vector<SynthesisRecord> records;
    Json failures = Json::array();
    for (auto i : dedup.kept) {
        const auto& sc = scenarios[i];
        try {
            auto result = synthesize_environment(sc, *backend, policy);
            save_bundle(result.bundle, fs::path(a.out) / sc.name);
            records.push_back(result.record);
            std::cerr << "synthesized " << sc.name << "\n";
        } catch (const StageFailed& e) {
            failures.push_back({{"scenario", sc.name}, {"stage", e.stage()}, {"error", e.what()}});
            std::cerr << sc.name << ": " << e.what() << "\n";
        }
    }
    Json dropped = Json::object();
    for (const auto& [i, why] : dedup.dropped) dropped[scenarios[i].name] = why;
    Json report = records.empty() ? Json::object() : synthesis_report(records);
    report["scenarios"] = scenarios.size();
    report["dropped"] = dropped;
    report["synthesized"] = records.size();
    report["failed"] = failures;
    Json per = Json::array();
    for (const auto& r : records) per.push_back(r.to_json());
    report["records"] = per;
    write_text_file(fs::path(a.out) / "synthesis_report.json", report.dump(2) + "\n");
    print({{"synthesized", records.size()}, {"failed", failures.size()}, {"dropped", dedup.dropped.size()}});
    return failures.empty() ? kOk : kThreshold;
}

// validate

int cmd_validate(const std::string& dir, const std::string& categories) {
    ValidationOptions opt;
    if (!categories.empty()) opt.load_categories(categories);
    const auto report = validate_bundle(load_bundle(dir), opt);
    print(report.to_json());
    return report.has_errors() ? kViolations : kOk;
}

// serve

struct ServeArgs {
    std::string bundle;
    std::string transport = "http";
    std::string host;
    int port = -1;
    std::string database;
};

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

int cmd_serve(const ServeArgs& a) {
    auto bundle = std::make_shared<const EnvironmentBundle>(load_bundle(a.bundle));
    preflight(*bundle);
    InstanceConfig c;
    c.bundle = bundle;
    c.host = a.host.empty() ? env_or("HOST", "127.0.0.1") : a.host;
    c.port = a.port >= 0 ? a.port : std::stoi(env_or("PORT", "0"));
    const auto db = a.database.empty() ? env_or("DATABASE_PATH", "") : a.database;
    c.instance_id = bundle->manifest.scenario.name;
    if (!db.empty()) {
        const fs::path p(db);
        c.state_root = p.has_parent_path() ? p.parent_path() : fs::current_path();
        c.instance_id = p.stem().string();
    }
    if (a.transport == "stdio") {
        c.transport = Transport::Stdio;
        auto inst = serve(c);
        serve_stdio(inst->server(), std::cin, std::cout);
        return kOk;
    }
    if (a.transport != "http") throw UsageError("transport must be http or stdio");
    c.transport = Transport::Http;
    auto inst = serve(c);
    inst->start_http();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    print({{"instance_id", inst->id()},
           {"host", inst->host()},
           {"port", *inst->port()},
           {"database", inst->handle().db_path().string()},
           {"digest", inst->initial().digest}});
    std::cout.flush();
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    return kOk;
}

// pool

int cmd_pool(const std::string& dir, std::size_t n, const std::string& transport) {
    const auto bundles = load_bundles(dir);
    for (const auto& b : bundles) preflight(*b);
    PoolOptions opt;
    if (transport == "http")
        opt.transport = Transport::Http;
    else if (transport != "inprocess")
        throw UsageError("transport must be inprocess or http");
    auto pool = spawn_pool(bundles, n, opt);
    const auto replaced = pool->health_check();
    Json instances = Json::array();
    for (const auto& inst : pool->live()) {
        Json j = {{"id", inst->id()}, {"bundle", inst->bundle().manifest.scenario.name}, {"digest", inst->initial().digest}};
        if (inst->port()) j["port"] = *inst->port();
        instances.push_back(j);
    }
    print({{"instances", instances},
           {"replaced", replaced},
           {"counters", pool->counters().to_json()},
           {"metrics", pool->metrics().to_json()}});
    return replaced.empty() ? kOk : kInfrastructure;
}

// rollout

struct RolloutArgs {
    std::string bundle;
    std::string task;
    std::string policy = "golden";
    std::size_t group = 16;
    std::size_t max_turns = 20;
    std::size_t window = 3;
    std::string out = "runs";
    std::size_t keep = 20;
    std::string judge;
};

int cmd_rollout(const RolloutArgs& a) {
    auto bundle = std::make_shared<const EnvironmentBundle>(load_bundle(a.bundle));
    if (!bundle->find_task(a.task)) throw CrossRefError("unknown task '" + a.task + "'");
    RolloutConfig cfg;
    cfg.max_turns = a.max_turns;
    cfg.window = a.window;
    cfg.group_size = a.group;
    cfg.check();

    // comma-separated policy specs are cycled to fill the group
    std::vector<std::string> specs;
    std::stringstream ss(a.policy);
    for (std::string s; std::getline(ss, s, ',');)
        if (!s.empty()) specs.push_back(s);
    if (specs.empty()) throw UsageError("no policy given");
    std::vector<PolicyPtr> policies;
    for (std::size_t i = 0; i < cfg.group_size; ++i) policies.push_back(make_policy(specs[i % specs.size()], *bundle, a.task));

    preflight(*bundle);
    std::unique_ptr<JudgeBackend> judge;
    if (!a.judge.empty()) {
        const auto [host, port] = split_endpoint(a.judge);
        judge = std::make_unique<HttpJudge>(host, port);
    }
    auto pool = spawn_pool({bundle}, cfg.group_size);
    const auto run_dir = new_run_dir(a.out);
    auto result = run_group(*pool, a.task, policies, cfg, run_dir, judge.get());
    prune_runs(a.out, a.keep);
    Json j = result.to_json();
    j["run_dir"] = run_dir.string();
    print(j);
    return kOk;
}

// verify

int cmd_verify(const std::string& dir, const std::string& task_id, const std::string& initial, const std::string& final,
               const std::string& trajectory_file) {
    const auto bundle = load_bundle(dir);
    const auto* task = bundle.find_task(task_id);
    if (!task) throw CrossRefError("unknown task '" + task_id + "'");
    const auto* spec = bundle.verification_for(*task);
    if (!spec) throw CrossRefError("task '" + task_id + "' has no verification");
    const auto a = load_snapshot(initial);
    const auto b = load_snapshot(final);
    const auto report = run_verification(*spec, a, b);

    std::optional<Trajectory> traj;
    if (!trajectory_file.empty()) traj = load_trajectory(trajectory_file);
    JudgeInput in;
    in.task = task;
    in.report = &report;
    in.success_criteria = spec->success_criteria;
    in.failure_criteria = spec->failure_criteria;
    if (traj) {
        in.trajectory = &*traj;
        in.termination = traj->termination;
    } else {
        in.termination = {TerminationKind::Answered, 0};
    }
    const auto cls = judge(in);
    Json out = {{"report", report.to_json()}, {"classification", cls.to_json()}, {"reward", reward_of(cls.category)}};
    if (traj) out["step_rewards"] = step_rewards(*traj, traj->termination, reward_of(cls.category));
    print(out);
    return kOk;
}

// stats

int cmd_stats(const std::string& dir, const std::string& format) {
    std::vector<EnvironmentBundle> bundles;
    for (const auto& d : bundle_dirs(dir)) bundles.push_back(load_bundle(d));
    const auto report = bundle_stats(bundles);
    if (format == "json") {
        print(report.to_json());
        return kOk;
    }
    if (format != "text") throw UsageError("format must be json or text");
    auto row = [](const char* name, const Summary& s) {
        std::printf("%-8s mean %8.2f  median %8.2f  p90 %8.2f\n", name, s.mean, s.median, s.p90);
    };
    std::printf("bundles  %zu\n", report.bundles);
    row("tables", report.tables);
    row("records", report.records);
    row("tools", report.tools);
    row("tasks", report.tasks);
    return kOk;
}

template <class F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const ThresholdExceeded& e) {
        std::cerr << "threshold exceeded: " << e.what() << "\n";
        return kThreshold;
    } catch (const StageFailed& e) {
        std::cerr << e.what() << "\n";
        return kThreshold;
    } catch (const ProvisionFailed& e) {
        std::cerr << "provisioning failed: " << e.what() << "\n";
        return kInfrastructure;
    } catch (const PortInUse& e) {
        std::cerr << e.what() << "\n";
        return kInfrastructure;
    } catch (const InstanceUnavailable& e) {
        std::cerr << e.what() << "\n";
        return kInfrastructure;
    } catch (const CapacityError& e) {
        std::cerr << e.what() << "\n";
        return kInfrastructure;
    } catch (const BackendFailure& e) {
        std::cerr << e.what() << "\n";
        return kInfrastructure;
    } catch (const JudgeBackendUnavailable& e) {
        std::cerr << e.what() << "\n";
        return kInfrastructure;
    } catch (const UsageError& e) {
        std::cerr << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        // missing or unreadable inputs, including MissingFile
        std::cerr << e.what() << "\n";
        return kViolations;
    } catch (const Error& e) {
        // parse errors, cross references, schema mismatches
        std::cerr << e.what() << "\n";
        return kViolations;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInfrastructure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Agent environment runtime"};
    app.require_subcommand(1);
    int code = kOk;

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Synthesize environment bundles from scenarios");
    synth->add_option("--scenarios", sa.scenarios, "JSON array or JSONL of scenarios")->required()->check(CLI::ExistingFile);
    synth->add_option("--backend", sa.backend, "template or external")->check(CLI::IsMember({"template", "external"}));
    synth->add_option("--endpoint", sa.endpoint, "host:port of the external generator");
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_option("--max-retries", sa.max_retries, "Correction retries per stage")->check(CLI::NonNegativeNumber);
    synth->add_option("--dedup-threshold", sa.dedup_threshold, "Cosine similarity threshold");
    synth->callback([&] { code = guarded([&] { return cmd_synth(sa); }); });

    std::string vdir, vcategories;
    auto* validate = app.add_subcommand("validate", "Check a bundle for structural violations");
    validate->add_option("bundle", vdir, "Bundle directory")->required();
    validate->add_option("--categories", vcategories, "Category registry file, one name per line");
    validate->callback([&] { code = guarded([&] { return cmd_validate(vdir, vcategories); }); });

    ServeArgs sv;
    auto* srv = app.add_subcommand("serve", "Serve one instance of a bundle");
    srv->add_option("bundle", sv.bundle, "Bundle directory")->required();
    srv->add_option("--transport", sv.transport, "http or stdio")->check(CLI::IsMember({"http", "stdio"}));
    srv->add_option("--host", sv.host, "Bind address (default $HOST or 127.0.0.1)");
    srv->add_option("--port", sv.port, "Port (default $PORT or any free port)");
    srv->add_option("--database", sv.database, "Database file (default $DATABASE_PATH)");
    srv->callback([&] { code = guarded([&] { return cmd_serve(sv); }); });

    std::string pdir, ptransport = "inprocess";
    std::size_t pn = 1;
    auto* pool = app.add_subcommand("pool", "Spawn a pool, health-check it and report");
    pool->add_option("--bundles", pdir, "Bundle directory or directory of bundles")->required();
    pool->add_option("--n", pn, "Number of instances")->required()->check(CLI::PositiveNumber);
    pool->add_option("--transport", ptransport, "inprocess or http");
    pool->callback([&] { code = guarded([&] { return cmd_pool(pdir, pn, ptransport); }); });

    RolloutArgs ra;
    auto* rollout = app.add_subcommand("rollout", "Run a group of scripted episodes on one task");
    rollout->add_option("--bundle", ra.bundle, "Bundle directory")->required();
    rollout->add_option("--task", ra.task, "Task id")->required();
    rollout->add_option("--policy", ra.policy,
                        "golden, noop, malformed:<rule>[@<step>] or replay:<file>; comma-separated specs are cycled");
    rollout->add_option("--group", ra.group, "Group size G")->check(CLI::PositiveNumber);
    rollout->add_option("--max-turns", ra.max_turns, "Turn budget")->check(CLI::PositiveNumber);
    rollout->add_option("--window", ra.window, "History window w")->check(CLI::PositiveNumber);
    rollout->add_option("--out", ra.out, "Root for run directories");
    rollout->add_option("--keep", ra.keep, "Run directories to retain")->check(CLI::PositiveNumber);
    rollout->add_option("--judge", ra.judge, "host:port of an external judge");
    rollout->callback([&] { code = guarded([&] { return cmd_rollout(ra); }); });

    std::string vb, vt, vi, vf, vtraj;
    auto* verify = app.add_subcommand("verify", "Verify a task against an initial and final snapshot");
    verify->add_option("--bundle", vb, "Bundle directory")->required();
    verify->add_option("--task", vt, "Task id")->required();
    verify->add_option("--initial", vi, "Initial snapshot database")->required()->check(CLI::ExistingFile);
    verify->add_option("--final", vf, "Final snapshot database")->required()->check(CLI::ExistingFile);
    verify->add_option("--trajectory", vtraj, "Trajectory JSONL for judging and step rewards");
    verify->callback([&] { code = guarded([&] { return cmd_verify(vb, vt, vi, vf, vtraj); }); });

    std::string sdir, sformat = "json";
    auto* stats = app.add_subcommand("stats", "Summary statistics over bundles");
    stats->add_option("--bundles", sdir, "Bundle directory or directory of bundles")->required();
    stats->add_option("--format", sformat, "json or text")->check(CLI::IsMember({"json", "text"}));
    stats->callback([&] { code = guarded([&] { return cmd_stats(sdir, sformat); }); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    return code;
}
