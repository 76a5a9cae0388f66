#include <doctest.h>

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "awm/errors.hpp"
#include "awm/state_store.hpp"
#include "awm/synth.hpp"
#include "awm/tool_runtime.hpp"
#include "awm/verification.hpp"
#include "support.hpp"

using namespace awm;
using awm::test::TempDir;

namespace {

// Artifact text is "failures/total"; the evaluator parses it back.
class ScriptedBackend : public GeneratorBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> script) : script_(std::move(script)) {}
    std::string name() const override { return "scripted"; }
    bool supports(Stage) const override { return true; }
    bool deterministic() const override { return true; }
    GenerationResult generate(const GenerationRequest& r) override {
        requests.push_back(r);
        const auto i = std::min<std::size_t>(requests.size() - 1, script_.size() - 1);
        return {script_[i], 0.25};
    }
    std::vector<GenerationRequest> requests;

private:
    std::vector<std::string> script_;
};

StageEvaluation ratio(const std::string& text) {
    StageEvaluation e;
    const auto slash = text.find('/');
    e.failures = std::stoul(text.substr(0, slash));
    e.total = std::stoul(text.substr(slash + 1));
    for (std::size_t i = 0; i < e.failures; ++i) e.errors.push_back("failure " + std::to_string(i) + " in " + text);
    e.normalized = "kept:" + text;
    return e;
}

class WithoutStage : public TemplateBackend {
public:
    explicit WithoutStage(Stage missing) : missing_(missing) {}
    bool supports(Stage s) const override { return s != missing_; }

private:
    Stage missing_;
};

Scenario scenario_named(const std::string& name, const std::string& category) {
    for (auto s : TemplateBackend::example_scenarios())
        if (s.category == category) {
            s.name = name;
            return s;
        }
    FAIL("no scenario for " << category);
    return {};
}

Scenario example(const std::string& category) {
    for (const auto& s : TemplateBackend::example_scenarios())
        if (s.category == category) return s;
    return {};
}

Category run_script(const EnvironmentBundle& b, const TaskSpec& task, const std::vector<ScriptedCall>& calls) {
    TempDir tmp;
    ProvisionOptions po;
    po.root = tmp.path();
    auto env = provision(b, "check", po);
    const auto initial = snapshot(env.handle, tmp / "initial");
    for (const auto& c : calls) execute_tool(b, env.handle, {c.tool, c.arguments});
    const auto final = snapshot(env.handle, tmp / "final");
    const auto report = run_verification(*b.verification_for(task), initial, final);
    JudgeInput in;
    in.task = &task;
    in.report = &report;
    in.termination = {TerminationKind::Answered, calls.size() + 2};
    return judge(in).category;
}

std::size_t word_count(const std::string& s) {
    std::istringstream in(s);
    std::size_t n = 0;
    std::string w;
    while (in >> w) ++n;
    return n;
}

}  // namespace

TEST_CASE("correction loop accepts a first attempt within threshold") {
    ScriptedBackend backend({"0/10"});
    const auto out = correction_loop(Stage::Schema, Json::object(), backend, {}, ratio);
    CHECK(out.record.attempts == 1);
    CHECK(out.record.success);
    CHECK(out.record.selected_attempt == 1);
    CHECK(out.record.error_summaries.empty());
    CHECK(out.artifact == "kept:0/10");
    CHECK(out.record.accepted_digest == sha256_hex(out.artifact));
    CHECK(out.record.cost_usd == doctest::Approx(0.25));
    CHECK_FALSE(backend.requests[0].error_summary.has_value());
}

TEST_CASE("correction loop feeds error summaries back until an attempt passes") {
    ScriptedBackend backend({"5/10", "4/10", "0/10"});
    const auto out = correction_loop(Stage::Seed, Json{{"scenario", "x"}}, backend, {}, ratio);
    CHECK(out.record.attempts == 3);
    CHECK(out.record.success);
    CHECK(out.record.selected_attempt == 3);
    REQUIRE(out.record.error_summaries.size() == 2);
    REQUIRE(backend.requests.size() == 3);
    CHECK(backend.requests[1].attempt == 2);
    CHECK(*backend.requests[1].error_summary == out.record.error_summaries[0]);
    CHECK(out.record.error_summaries[0].find("in 5/10") != std::string::npos);
    CHECK(*backend.requests[2].error_summary == out.record.error_summaries[1]);
    CHECK(backend.requests[2].context == Json{{"scenario", "x"}});
}

TEST_CASE("correction loop selects the lowest failure fraction when every attempt fails") {
    ScriptedBackend backend({"5/10", "3/10", "4/10", "6/10", "2/10", "9/10"});
    const auto out = correction_loop(Stage::Schema, Json::object(), backend, {}, ratio);
    CHECK(out.record.attempts == 6);
    CHECK_FALSE(out.record.success);
    CHECK(out.record.selected_attempt == 5);
    CHECK(out.artifact == "kept:2/10");
    CHECK(out.record.failure_fractions == std::vector<double>{.5, .3, .4, .6, .2, .9});
    CHECK(out.record.error_summaries.size() == 5);
    CHECK(backend.requests.size() == 6);
}

TEST_CASE("correction loop breaks ties toward the earliest attempt") {
    ScriptedBackend backend({"3/10", "2/10", "2/10"});
    CorrectionPolicy policy;
    policy.max_retries = 2;
    const auto out = correction_loop(Stage::Toolset, Json::object(), backend, policy, ratio);
    CHECK(out.record.attempts == 3);
    CHECK(out.record.selected_attempt == 2);
}

TEST_CASE("correction thresholds are inclusive per stage") {
    auto attempts_for = [](Stage stage, const std::string& first) {
        ScriptedBackend backend({first, "0/100"});
        return correction_loop(stage, Json::object(), backend, {}, ratio).record.attempts;
    };
    CHECK(attempts_for(Stage::Schema, "9/100") == 1);
    CHECK(attempts_for(Stage::Schema, "10/100") == 1);
    CHECK(attempts_for(Stage::Schema, "11/100") == 2);
    CHECK(attempts_for(Stage::Seed, "1/10") == 1);
    CHECK(attempts_for(Stage::Seed, "2/10") == 2);
    CHECK(attempts_for(Stage::Plans, "1/100") == 2);
    CHECK(attempts_for(Stage::Verification, "0/10") == 1);

    CorrectionPolicy none;
    none.max_retries = 0;
    ScriptedBackend backend({"7/10"});
    const auto out = correction_loop(Stage::Schema, Json::object(), backend, none, ratio);
    CHECK(out.record.attempts == 1);
    CHECK_FALSE(out.record.success);
}

TEST_CASE("error summaries are cut to the word limit") {
    std::vector<std::string> errors;
    for (int i = 0; i < 120; ++i) errors.push_back("table t" + std::to_string(i) + ": near FROM: syntax error");
    const auto s = summarize_errors(errors, 500);
    CHECK(word_count(s) == 500);
    CHECK(s.rfind("table t0:", 0) == 0);
    CHECK(word_count(summarize_errors({"a b c"}, 500)) == 3);
    CHECK(summarize_errors({}, 500).empty());
    CHECK(word_count(summarize_errors(errors, 7)) == 7);
}

TEST_CASE("backend without verification support fails that stage") {
    WithoutStage backend(Stage::Verification);
    try {
        synthesize_environment(example("lending"), backend);
        FAIL("expected StageFailed");
    } catch (const StageFailed& e) {
        CHECK(e.stage() == "verification");
    }
    WithoutStage no_tasks(Stage::Tasks);
    CHECK_THROWS_AS(correction_loop(Stage::Tasks, Json::object(), no_tasks, {}, ratio), StageFailed);
}

TEST_CASE("task stage drops authentication tasks and counts malformed ones") {
    SynthesisOptions opt;
    const EnvironmentBundle empty;
    auto e = evaluate_stage(Stage::Tasks,
                            R"([{"id": "reset", "instruction": "Reset my password and log in again."},
                                {"id": "borrow", "instruction": "Borrow Dune."}])",
                            empty, opt);
    CHECK(e.failures == 0);
    CHECK(e.failure_fraction() == 0.0);
    CHECK(Json::parse(e.normalized) == Json::parse(R"([{"id": "borrow", "instruction": "Borrow Dune."}])"));

    e = evaluate_stage(Stage::Tasks, R"([{"id": "ok", "instruction": "Borrow Dune."}, {"instruction": "no id"}, 4])", empty, opt);
    CHECK(e.failures == 2);
    CHECK(e.total == 3);

    e = evaluate_stage(Stage::Tasks, R"([{"id": "only", "instruction": "Sign in to my profile."}])", empty, opt);
    CHECK(e.failure_fraction() == 1.0);
    CHECK(evaluate_stage(Stage::Tasks, "not json", empty, opt).failure_fraction() == 1.0);

    opt.tasks_per_scenario = 1;
    e = evaluate_stage(Stage::Tasks, R"([{"id": "a", "instruction": "A."}, {"id": "b", "instruction": "B."}])", empty, opt);
    CHECK(Json::parse(e.normalized).size() == 1);
}

TEST_CASE("schema and seed stages execute statements and prune failures") {
    SynthesisOptions opt;
    EnvironmentBundle partial;
    const std::string schema = "CREATE TABLE users (id INTEGER PRIMARY KEY, name TEXT, password_hash TEXT);\n\n"
                               "CREATE TABLE items (id INTEGER PRIMARY KEY, name TEXT NOT NULL);\n"
                               "CREATE INDEX idx_items_name ON items (name);\n\n"
                               "CREATE TABLE broken (id INTEGER PRIMARY KEY, x TEXT DEFAULT);\n";
    const auto e = evaluate_stage(Stage::Schema, schema, partial, opt);
    CHECK(e.total == 4);
    CHECK(e.failures == 2);
    partial.schema = parse_schema(e.normalized);
    REQUIRE(partial.schema.tables.size() == 1);
    CHECK(partial.schema.tables[0].name == "items");
    CHECK(partial.schema.tables[0].indexes.size() == 1);

    std::string seed = "-- @table items\n";
    for (int i = 1; i <= 10; ++i)
        seed += "INSERT INTO items (id, name) VALUES (" + std::to_string(i) + ", 'item " + std::to_string(i) + "');\n";
    seed += "INSERT INTO items (id, name) VALUES (3, 'duplicate');\n";
    const auto s = evaluate_stage(Stage::Seed, seed, partial, opt);
    CHECK(s.total == 11);
    CHECK(s.failures == 1);
    CHECK(parse_seed(s.normalized).statement_count() == 10);
    CHECK(evaluate_stage(Stage::Seed, "", partial, opt).failure_fraction() == 1.0);
}

TEST_CASE("every template family synthesizes a valid bundle whose golden runs complete") {
    for (const auto& family : TemplateBackend::families()) {
        CAPTURE(family);
        TemplateBackend backend;
        const auto result = synthesize_environment(example(family), backend);
        const auto& b = result.bundle;
        CHECK(b.tasks.size() == 10);
        CHECK(b.golden.size() == 10);
        CHECK(b.toolset.size() >= 10);
        CHECK(b.schema.tables.size() >= 5);
        CHECK_FALSE(validate_bundle(b).has_errors());
        REQUIRE(result.record.stages.size() == 6);
        for (const auto& s : result.record.stages) {
            CAPTURE(to_string(s.stage));
            CHECK(s.success);
            CHECK(s.attempts == 1);
        }
        for (const auto& task : b.tasks) {
            CAPTURE(task.id);
            CHECK(run_script(b, task, b.golden.at(task.id).calls) == Category::Completed);
            CHECK(run_script(b, task, {}) != Category::Completed);
        }
    }
}

TEST_CASE("template synthesis is deterministic per scenario and varies across names") {
    TemplateBackend backend;
    const auto a = synthesize_environment(scenario_named("pantry-shop", "commerce"), backend);
    const auto b = synthesize_environment(scenario_named("pantry-shop", "commerce"), backend);
    const auto c = synthesize_environment(scenario_named("cellar-shop", "commerce"), backend);
    CHECK(bundle_digest(a.bundle) == bundle_digest(b.bundle));
    CHECK(bundle_digest(a.bundle) != bundle_digest(c.bundle));
    CHECK(a.record.to_json() == b.record.to_json());

    TempDir tmp;
    save_bundle(a.bundle, tmp / "bundle");
    CHECK(bundle_digest(load_bundle(tmp / "bundle")) == bundle_digest(a.bundle));
}

TEST_CASE("faulty attempts are corrected through retries") {
    TemplateOptions opt;
    opt.faulty_attempts = {{Stage::Schema, 2}, {Stage::Plans, 1}};
    TemplateBackend backend(opt);
    const auto result = synthesize_environment(example("booking"), backend);
    const auto& schema = result.record.stages[1];
    CHECK(schema.attempts == 3);
    CHECK(schema.success);
    CHECK(schema.error_summaries.size() == 2);
    CHECK(result.record.stages[4].attempts == 2);
    CHECK(result.record.stages[0].attempts == 1);

    const auto report = synthesis_report({result.record});
    CHECK(report["environments"] == 1);
    CHECK(report["stages"][1]["mean_trials"].get<double>() == doctest::Approx(3.0));
    CHECK(report["stages"][1]["success_pct"].get<double>() == doctest::Approx(100.0));
}

TEST_CASE("a stage that never recovers fails synthesis") {
    TemplateOptions opt;
    opt.faulty_attempts = {{Stage::Verification, 6}};
    TemplateBackend backend(opt);
    try {
        synthesize_environment(example("lending"), backend);
        FAIL("expected StageFailed");
    } catch (const StageFailed& e) {
        CHECK(e.stage() == "verification");
    }
    CHECK_THROWS_AS(synthesize_environment(scenario_named("Bad Name", "lending"), backend), StageFailed);
}

TEST_CASE("dedup matches a brute-force greedy oracle") {
    const std::vector<std::string> words = {"shop", "library", "clinic", "booking", "cart", "loan", "order", "slot",
                                            "review", "member", "travel", "hotel", "flight", "ticket", "recipe", "class"};
    const std::vector<std::string> cats = {"commerce", "lending", "booking"};
    std::mt19937 rng(7);
    for (int round = 0; round < 20; ++round) {
        std::vector<Scenario> cands;
        for (int i = 0; i < 50; ++i) {
            std::string desc;
            const int n = 3 + static_cast<int>(rng() % 4);
            for (int w = 0; w < n; ++w) desc += words[rng() % words.size()] + " ";
            Scenario s;
            s.name = "s" + std::to_string(i);
            s.category = cats[rng() % cats.size()];
            s.description = desc;
            cands.push_back(s);
        }
        DedupOptions opt;
        opt.threshold = 0.5 + 0.05 * (round % 8);
        if (round % 2) opt.category_caps = {{"commerce", 3}};
        if (round % 3 == 0) opt.default_cap = 5;
        const auto r = dedup_scenarios(cands, [](const std::string& t) { return hashed_embedding(t); }, opt);

        // oracle: bag-of-words counts hashed through the same embedding, cosine computed directly
        std::vector<std::size_t> kept;
        std::map<std::string, std::size_t> per_cat;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const auto cap = opt.category_caps.count(cands[i].category) ? std::optional(opt.category_caps.at(cands[i].category))
                                                                       : opt.default_cap;
            if (cap && per_cat[cands[i].category] >= *cap) continue;
            const auto v = hashed_embedding(scenario_text(cands[i]));
            bool dup = false;
            for (auto k : kept) {
                const auto u = hashed_embedding(scenario_text(cands[k]));
                double dot = 0, nu = 0, nv = 0;
                for (std::size_t d = 0; d < v.size(); ++d) {
                    dot += u[d] * v[d];
                    nu += u[d] * u[d];
                    nv += v[d] * v[d];
                }
                if (dot / std::sqrt(nu * nv) >= opt.threshold) dup = true;
            }
            if (dup) continue;
            kept.push_back(i);
            ++per_cat[cands[i].category];
        }
        CHECK(r.kept == kept);
        CHECK(r.kept.size() + r.dropped.size() == cands.size());
    }
}

TEST_CASE("dedup drops near-identical scenarios and applies filters") {
    std::vector<Scenario> c(3);
    c[0] = {"a", "", "online library for lending books", "lending"};
    c[1] = {"a", "", "online library for lending books", "lending"};
    c[2] = {"b", "", "hotel room reservations by night", "travel"};
    auto r = dedup_scenarios(c, [](const std::string& t) { return hashed_embedding(t); });
    CHECK(r.kept == std::vector<std::size_t>{0, 2});
    CHECK(r.dropped.at(1).find("similar") != std::string::npos);

    DedupOptions opt;
    opt.accept = [](const Scenario& s) { return s.category != "travel"; };
    r = dedup_scenarios(c, [](const std::string& t) { return hashed_embedding(t); }, opt);
    CHECK(r.kept == std::vector<std::size_t>{0});
    CHECK(r.dropped.at(2) == "filtered");

    CHECK(cosine_similarity(hashed_embedding("same words"), hashed_embedding("words same")) == doctest::Approx(1.0));
    CHECK(cosine_similarity({0, 0}, {1, 0}) == 0.0);
}

TEST_CASE("summary statistics") {
    auto s = summarize({7, 3, 5});
    CHECK(s.mean == doctest::Approx(5));
    CHECK(s.median == doctest::Approx(5));
    CHECK(s.p90 == doctest::Approx(7));
    s = summarize({1, 2, 3, 4});
    CHECK(s.median == doctest::Approx(2.5));
    std::vector<double> v;
    for (int i = 1; i <= 20; ++i) v.push_back(i);
    CHECK(summarize(v).p90 == doctest::Approx(18));  // nearest rank: ceil(0.9 * 20) = 18
    v.push_back(21);
    CHECK(summarize(v).p90 == doctest::Approx(19));  // ceil(18.9) = 19
    CHECK_THROWS_AS(summarize({}), EmptySet);
    CHECK_THROWS_AS(bundle_stats({}), EmptySet);

    const auto r = bundle_stats({test::fixture_bundle()});
    CHECK(r.bundles == 1);
    CHECK(r.tables.mean == doctest::Approx(test::fixture_bundle().schema.tables.size()));
    CHECK(r.tasks.median == doctest::Approx(4));
    CHECK(r.to_json()["tools"]["p90"] == 6.0);
}

TEST_CASE("scenarios load from a JSON array or JSON lines") {
    TempDir tmp;
    const auto scenarios = TemplateBackend::example_scenarios();
    Json arr = Json::array();
    std::string lines;
    for (const auto& s : scenarios) {
        arr.push_back(to_json(s));
        lines += to_json(s).dump() + "\n";
    }
    std::ofstream(tmp / "a.json") << arr.dump(2);
    std::ofstream(tmp / "b.jsonl") << lines << "\n";
    CHECK(load_scenarios(tmp / "a.json") == scenarios);
    CHECK(load_scenarios(tmp / "b.jsonl") == scenarios);
    std::ofstream(tmp / "c.jsonl") << lines << "{oops\n";
    CHECK_THROWS_AS(load_scenarios(tmp / "c.jsonl"), ParseError);
}

TEST_CASE("external backend posts the prompt and reads the artifact") {
    httplib::Server srv;
    Json seen;
    srv.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        seen = Json::parse(req.body);
        if (seen["stage"] == "seed")
            res.set_content(R"({"oops": true})", "application/json");
        else
            res.set_content(R"({"artifact_text": "[]", "cost_usd": 0.02})", "application/json");
    });
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread th([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();

    ExternalBackend backend("127.0.0.1", port);
    GenerationRequest req{Stage::Tasks, Json{{"scenario", to_json(example("commerce"))}, {"k", 10}}, std::string("bad id"), 2};
    const auto out = backend.generate(req);
    CHECK(out.artifact_text == "[]");
    CHECK(out.cost_usd == doctest::Approx(0.02));
    CHECK(seen["stage"] == "tasks");
    CHECK(seen["attempt"] == 2);
    CHECK(seen["prompt_version"] == ExternalBackend::prompt_version());
    const auto prompt = seen["prompt"].get<std::string>();
    CHECK(prompt.find("Write 10 distinct") != std::string::npos);
    CHECK(prompt.find("bad id") != std::string::npos);
    CHECK(prompt.find("homeware-shop") != std::string::npos);

    req.stage = Stage::Seed;
    CHECK_THROWS_AS(backend.generate(req), BackendFailure);
    srv.stop();
    th.join();

    ExternalBackend down("127.0.0.1", port);
    CHECK_THROWS_AS(down.generate(req), BackendFailure);
}
