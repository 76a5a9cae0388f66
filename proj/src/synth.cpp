#include "awm/synth.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>

#include "awm/errors.hpp"
#include "awm/reward.hpp"
#include "awm/sqlite.hpp"
#include "awm/state_store.hpp"
#include "awm/tool_runtime.hpp"
#include "awm/verification.hpp"

namespace awm {

namespace fs = std::filesystem;

namespace {

class ScratchDir {
public:
    ScratchDir() {
        static std::atomic<unsigned> seq{0};
        path_ = fs::temp_directory_path() /
                ("awm-synth-" + std::to_string(::getpid()) + "-" + std::to_string(seq.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

StageEvaluation total_failure(std::string why) {
    StageEvaluation e;
    e.failures = 1;
    e.total = 1;
    e.errors.push_back(std::move(why));
    return e;
}

std::optional<Json> parse_artifact(const std::string& text, std::string& error) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        error = e.what();
        return std::nullopt;
    }
}

bool valid_id(const std::string& id) {
    return !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::islower(c) || std::isdigit(c) || c == '-' || c == '_';
    });
}

std::vector<std::string> table_columns(sqlite::Database& db, const std::string& table) {
    std::vector<std::string> out;
    auto st = db.prepare("SELECT name FROM pragma_table_info(?1)");
    st.bind(1, table);
    while (st.step()) out.push_back(st.column_text(0));
    return out;
}

void apply_schema(sqlite::Database& db, const SchemaSpec& schema) {
    for (const auto& t : schema.tables) {
        db.exec(t.ddl);
        for (const auto& i : t.indexes) db.exec(i);
    }
}

StageEvaluation evaluate_tasks(const std::string& text, const SynthesisOptions& opt) {
    std::string err;
    const auto j = parse_artifact(text, err);
    if (!j || !j->is_array()) return total_failure("tasks artifact is not a JSON array" + (err.empty() ? "" : ": " + err));
    StageEvaluation e;
    e.total = j->size();
    Json kept = Json::array();
    std::set<std::string> ids;
    for (std::size_t i = 0; i < j->size(); ++i) {
        const auto& t = (*j)[i];
        const auto where = "task " + std::to_string(i);
        if (!t.is_object() || !t.contains("id") || !t["id"].is_string() || !t.contains("instruction") ||
            !t["instruction"].is_string()) {
            ++e.failures;
            e.errors.push_back(where + ": expected {id, instruction}");
            continue;
        }
        const auto id = t["id"].get<std::string>();
        const auto instruction = t["instruction"].get<std::string>();
        if (!valid_id(id) || instruction.empty() || !ids.insert(id).second) {
            ++e.failures;
            e.errors.push_back(where + ": invalid, empty or duplicate id/instruction '" + id + "'");
            continue;
        }
        // deny-listed tasks are removed, not retried
        if (mentions_authentication(instruction, opt.validation.auth_task_phrases)) continue;
        if (kept.size() < opt.tasks_per_scenario) kept.push_back({{"id", id}, {"instruction", instruction}});
    }
    if (kept.empty()) {
        e.failures = std::max<std::size_t>(e.total, 1);
        e.total = e.failures;
        e.errors.push_back("no usable tasks");
    }
    e.normalized = canonical_dump(kept);
    return e;
}

StageEvaluation evaluate_schema(const std::string& text, const SynthesisOptions& opt) {
    SchemaSpec schema;
    try {
        schema = parse_schema(text);
    } catch (const Error& ex) {
        return total_failure(std::string("schema does not parse: ") + ex.what());
    }
    if (schema.tables.empty()) return total_failure("schema declares no tables");
    auto db = sqlite::Database::memory();
    db.exec("PRAGMA foreign_keys = ON");
    StageEvaluation e;
    SchemaSpec kept;
    for (const auto& t : schema.tables) {
        e.total += 1 + t.indexes.size();
        try {
            db.exec(t.ddl);
        } catch (const sqlite::SqlError& ex) {
            e.failures += 1 + t.indexes.size();
            e.errors.push_back("table " + t.name + ": " + ex.what());
            continue;
        }
        bool auth = false;
        for (const auto& c : table_columns(db, t.name))
            if (is_auth_column(c, opt.validation.auth_column_terms)) {
                auth = true;
                e.errors.push_back("table " + t.name + ": authentication column '" + c + "' is not allowed");
            }
        if (auth) {
            e.failures += 1 + t.indexes.size();
            db.exec("DROP TABLE \"" + t.name + "\"");
            continue;
        }
        TableSpec k{t.name, t.ddl, {}};
        for (const auto& i : t.indexes) {
            try {
                db.exec(i);
                k.indexes.push_back(i);
            } catch (const sqlite::SqlError& ex) {
                ++e.failures;
                e.errors.push_back("index on " + t.name + ": " + ex.what());
            }
        }
        kept.tables.push_back(std::move(k));
    }
    e.normalized = schema_text(kept);
    return e;
}

StageEvaluation evaluate_seed(const std::string& text, const EnvironmentBundle& partial) {
    SeedSpec seed;
    try {
        seed = parse_seed(text);
    } catch (const Error& ex) {
        return total_failure(std::string("seed does not parse: ") + ex.what());
    }
    if (seed.statement_count() == 0) return total_failure("seed contains no records");
    auto db = sqlite::Database::memory(kDefaultClockEpoch);
    apply_schema(db, partial.schema);
    db.exec("PRAGMA foreign_keys = ON");
    StageEvaluation e;
    SeedSpec kept;
    for (const auto& section : seed.tables) {
        SeedTable k{section.table, section.rationale, {}};
        for (const auto& stmt : section.statements) {
            ++e.total;
            try {
                db.exec(stmt);
                k.statements.push_back(stmt);
            } catch (const sqlite::SqlError& ex) {
                ++e.failures;
                e.errors.push_back(section.table + ": " + ex.what() + " in: " + stmt.substr(0, 160));
            }
        }
        if (!k.statements.empty()) kept.tables.push_back(std::move(k));
    }
    e.normalized = seed_text(kept);
    return e;
}

StageEvaluation evaluate_toolset(const std::string& text) {
    std::string err;
    const auto j = parse_artifact(text, err);
    if (!j || !j->is_array() || j->empty())
        return total_failure("toolset artifact is not a non-empty JSON array" + (err.empty() ? "" : ": " + err));
    StageEvaluation e;
    e.total = j->size();
    Json kept = Json::array();
    std::set<std::string> names;
    for (std::size_t i = 0; i < j->size(); ++i) {
        Json t = (*j)[i];
        try {
            if (!t.is_object()) throw Error("expected object");
            t["plan"] = Json::array();
            t.erase("response");
            const auto tool = tool_from_json(t);
            if (!valid_id(tool.name)) throw Error("invalid tool name '" + tool.name + "'");
            if (!names.insert(tool.name).second) throw Error("duplicate tool '" + tool.name + "'");
            auto out = to_json(tool);
            out.erase("plan");
            out.erase("response");
            kept.push_back(std::move(out));
        } catch (const Error& ex) {
            ++e.failures;
            e.errors.push_back("tool " + std::to_string(i) + ": " + ex.what());
        }
    }
    e.normalized = canonical_dump(kept);
    return e;
}

std::vector<ToolDef> merge_plans(const EnvironmentBundle& partial, const Json& plans, StageEvaluation& e,
                                 std::map<std::string, Json>& raw) {
    std::vector<ToolDef> tools;
    for (const auto& iface : partial.toolset) {
        ++e.total;
        if (!plans.contains(iface.name) || !plans[iface.name].is_object()) {
            ++e.failures;
            e.errors.push_back("tool " + iface.name + ": no implementation");
            continue;
        }
        const auto& impl = plans[iface.name];
        Json full = to_json(iface);
        full["plan"] = impl.value("plan", Json::array());
        full["response"] = impl.value("response", Json::array());
        if (impl.contains("constants")) full["constants"] = impl["constants"];
        try {
            tools.push_back(tool_from_json(full));
            raw[iface.name] = impl;
        } catch (const Error& ex) {
            ++e.failures;
            e.errors.push_back("tool " + iface.name + ": " + ex.what());
        }
    }
    return tools;
}

StageEvaluation evaluate_plans(const std::string& text, const EnvironmentBundle& partial,
                               const SynthesisOptions& opt) {
    std::string err;
    const auto j = parse_artifact(text, err);
    if (!j || !j->is_object()) return total_failure("plans artifact is not a JSON object" + (err.empty() ? "" : ": " + err));
    StageEvaluation e;
    std::map<std::string, Json> raw;
    auto tools = merge_plans(partial, *j, e, raw);

    EnvironmentBundle b;
    b.manifest = partial.manifest;
    b.schema = partial.schema;
    b.seed = partial.seed;
    b.toolset = tools;
    std::set<std::string> broken;
    for (const auto& v : validate_bundle(b, opt.validation).violations) {
        if (v.severity != Severity::Error || v.location.rfind("toolset/", 0) != 0) continue;
        const auto name = v.location.substr(8, v.location.find('/', 8) - 8);
        if (broken.insert(name).second) ++e.failures;
        e.errors.push_back(v.location + ": " + v.code + ": " + v.message);
    }
    std::erase_if(b.toolset, [&](const ToolDef& t) { return broken.count(t.name) > 0; });

    // environment startup: provision and list tools with zero tolerance
    try {
        ScratchDir scratch;
        ProvisionOptions po;
        po.root = scratch.path();
        auto env = provision(b, "startup", po);
        if (list_tools(b).size() != b.toolset.size()) throw Error("list_tools does not expose every tool");
    } catch (const Error& ex) {
        e.errors.push_back(std::string("startup: ") + ex.what());
        e.failures = e.total = std::max<std::size_t>(e.total, 1);
        return e;
    }
    Json kept = Json::object();
    for (const auto& t : b.toolset) kept[t.name] = raw[t.name];
    e.normalized = canonical_dump(kept);
    return e;
}

std::optional<GoldenScript> golden_from(const Json& j) {
    if (!j.is_object() || !j.contains("calls")) return std::nullopt;
    GoldenScript g;
    for (const auto& c : j.at("calls")) g.calls.push_back({c.at("tool").get<std::string>(), c.value("arguments", Json::object())});
    g.answer = j.value("answer", "");
    return g;
}

struct VerificationArtifact {
    std::map<std::string, VerificationSpec> specs;   // by task id
    std::map<std::string, GoldenScript> golden;      // by task id
    std::map<std::string, Json> raw;
};

StageEvaluation evaluate_verification(const std::string& text, const EnvironmentBundle& partial,
                                      const SynthesisOptions& opt) {
    std::string err;
    const auto j = parse_artifact(text, err);
    if (!j || !j->is_object())
        return total_failure("verification artifact is not a JSON object" + (err.empty() ? "" : ": " + err));
    StageEvaluation e;
    VerificationArtifact art;
    std::set<std::string> bad;
    for (const auto& task : partial.tasks) {
        ++e.total;
        if (!j->contains(task.id)) {
            bad.insert(task.id);
            e.errors.push_back("task " + task.id + ": no verification");
            continue;
        }
        try {
            const auto& entry = (*j)[task.id];
            auto spec = verification_from_json(entry.at("spec"));
            spec.id = task.verification_ref;
            art.specs[task.id] = std::move(spec);
            if (entry.contains("golden"))
                if (auto g = golden_from(entry["golden"])) art.golden[task.id] = *g;
            art.raw[task.id] = entry;
        } catch (const std::exception& ex) {
            bad.insert(task.id);
            e.errors.push_back("task " + task.id + ": " + ex.what());
        }
    }

    EnvironmentBundle b = partial;
    for (const auto& [id, spec] : art.specs) b.verifications[spec.id] = spec;
    b.golden = art.golden;
    for (const auto& v : validate_bundle(b, opt.validation).violations) {
        if (v.severity != Severity::Error) continue;
        for (const auto& task : partial.tasks) {
            if (!art.specs.count(task.id)) continue;
            if (v.location.rfind("verify/" + task.verification_ref, 0) == 0 || v.location.rfind("golden/" + task.id, 0) == 0) {
                bad.insert(task.id);
                e.errors.push_back(v.location + ": " + v.code + ": " + v.message);
            }
        }
    }

    // execute: golden runs must complete, an untouched database must not
    try {
        ScratchDir scratch;
        ProvisionOptions po;
        po.root = scratch.path();
        auto env = provision(b, "verify", po);
        const auto initial = snapshot(env.handle, scratch.path() / "initial");
        for (const auto& task : partial.tasks) {
            if (bad.count(task.id) || !art.specs.count(task.id)) continue;
            const auto& spec = art.specs[task.id];
            const auto idle = run_verification(spec, initial, initial);
            JudgeInput in;
            in.report = &idle;
            in.termination = {TerminationKind::Answered, 1};
            if (judge(in).category == Category::Completed) {
                bad.insert(task.id);
                e.errors.push_back("task " + task.id + ": verification accepts an unchanged database");
                continue;
            }
            const auto g = art.golden.find(task.id);
            if (g == art.golden.end()) continue;
            reset(env.handle, initial);
            for (const auto& c : g->second.calls) {
                const auto r = execute_tool(b, env.handle, {c.tool, c.arguments});
                if (!r.is_ok()) e.errors.push_back("task " + task.id + ": golden call " + c.tool + " failed: " + r.message);
            }
            const auto final = snapshot(env.handle, scratch.path() / ("final-" + task.id));
            const auto report = run_verification(spec, initial, final);
            in.report = &report;
            if (judge(in).category != Category::Completed) {
                bad.insert(task.id);
                e.errors.push_back("task " + task.id + ": golden script does not satisfy the verification");
            }
        }
    } catch (const Error& ex) {
        e.errors.push_back(std::string("provisioning for verification failed: ") + ex.what());
        e.failures = e.total;
        return e;
    }

    e.failures = bad.size();
    Json kept = Json::object();
    for (const auto& [id, raw] : art.raw)
        if (!bad.count(id)) kept[id] = raw;
    e.normalized = canonical_dump(kept);
    return e;
}

}  // namespace

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Tasks: return "tasks";
        case Stage::Schema: return "schema";
        case Stage::Seed: return "seed";
        case Stage::Toolset: return "toolset";
        case Stage::Plans: return "plans";
        case Stage::Verification: return "verification";
    }
    return "tasks";
}

Stage stage_from(const std::string& name) {
    for (auto s : kStageOrder)
        if (to_string(s) == name) return s;
    throw Error("unknown synthesis stage '" + name + "'");
}

Json GenerationRequest::to_json() const {
    Json j{{"stage", to_string(stage)}, {"context", context}, {"attempt", attempt}};
    if (error_summary) j["error_summary"] = *error_summary;
    return j;
}

double CorrectionPolicy::threshold(Stage stage) const {
    const auto it = thresholds.find(stage);
    return it == thresholds.end() ? 0.0 : it->second;
}

double StageEvaluation::failure_fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(total);
}

Json StageRecord::to_json() const {
    return {{"stage", to_string(stage)},
            {"attempts", attempts},
            {"failure_fractions", failure_fractions},
            {"error_summaries", error_summaries},
            {"selected_attempt", selected_attempt},
            {"accepted_digest", accepted_digest},
            {"success", success},
            {"cost_usd", cost_usd}};
}

std::string summarize_errors(const std::vector<std::string>& errors, std::size_t word_limit) {
    std::string out;
    std::size_t words = 0;
    for (const auto& line : errors) {
        std::istringstream in(line);
        std::string w, rebuilt;
        while (in >> w) {
            if (words == word_limit) break;
            if (!rebuilt.empty()) rebuilt += ' ';
            rebuilt += w;
            ++words;
        }
        if (!rebuilt.empty()) {
            if (!out.empty()) out += '\n';
            out += rebuilt;
        }
        if (words == word_limit) break;
    }
    return out;
}

CorrectionOutcome correction_loop(Stage stage, const Json& context, GeneratorBackend& backend,
                                  const CorrectionPolicy& policy, const StageEvaluator& evaluate) {
    if (!backend.supports(stage)) throw StageFailed(to_string(stage), backend.name() + " backend does not support it");
    CorrectionOutcome out;
    auto& rec = out.record;
    rec.stage = stage;
    const double threshold = policy.threshold(stage);
    std::optional<std::string> summary;
    std::vector<StageEvaluation> evals;
    const int max_attempts = std::max(0, policy.max_retries) + 1;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        GenerationRequest req{stage, context, summary, attempt};
        const auto generated = backend.generate(req);
        rec.cost_usd += generated.cost_usd;
        evals.push_back(evaluate(generated.artifact_text));
        const auto& ev = evals.back();
        rec.attempts = attempt;
        rec.failure_fractions.push_back(ev.failure_fraction());
        if (ev.failure_fraction() <= threshold + 1e-9) {
            rec.success = true;
            rec.selected_attempt = attempt;
            out.artifact = ev.normalized;
            rec.accepted_digest = sha256_hex(out.artifact);
            return out;
        }
        if (attempt < max_attempts) {
            summary = summarize_errors(ev.errors, policy.summary_word_limit);
            rec.error_summaries.push_back(*summary);
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < evals.size(); ++i)
        if (evals[i].failure_fraction() < evals[best].failure_fraction()) best = i;
    rec.success = false;
    rec.selected_attempt = static_cast<int>(best) + 1;
    out.artifact = evals[best].normalized;
    rec.accepted_digest = sha256_hex(out.artifact);
    return out;
}

StageEvaluation evaluate_stage(Stage stage, const std::string& text, const EnvironmentBundle& partial,
                               const SynthesisOptions& options) {
    switch (stage) {
        case Stage::Tasks: return evaluate_tasks(text, options);
        case Stage::Schema: return evaluate_schema(text, options);
        case Stage::Seed: return evaluate_seed(text, partial);
        case Stage::Toolset: return evaluate_toolset(text);
        case Stage::Plans: return evaluate_plans(text, partial, options);
        case Stage::Verification: return evaluate_verification(text, partial, options);
    }
    return total_failure("unknown stage");
}

double SynthesisRecord::cost_usd() const {
    double c = 0;
    for (const auto& s : stages) c += s.cost_usd;
    return c;
}

Json SynthesisRecord::to_json() const {
    Json st = Json::array();
    for (const auto& s : stages) st.push_back(s.to_json());
    return {{"scenario", scenario}, {"stages", st}, {"cost_usd", cost_usd()}};
}

SynthesisResult synthesize_environment(const Scenario& scenario, GeneratorBackend& backend,
                                       const CorrectionPolicy& policy, const SynthesisOptions& options) {
    if (!valid_id(scenario.name)) throw StageFailed("scenario", "invalid scenario name '" + scenario.name + "'");
    if (!options.validation.categories.count(scenario.category))
        throw StageFailed("scenario", "unknown category '" + scenario.category + "'");
    for (auto stage : kStageOrder)
        if (!backend.supports(stage)) throw StageFailed(to_string(stage), backend.name() + " backend does not support it");

    SynthesisResult result;
    auto& b = result.bundle;
    b.manifest.scenario = scenario;
    result.record.scenario = scenario.name;
    Json context{{"scenario", to_json(scenario)}, {"k", options.tasks_per_scenario}};

    for (auto stage : kStageOrder) {
        auto outcome = correction_loop(stage, context, backend, policy,
                                       [&](const std::string& text) { return evaluate_stage(stage, text, b, options); });
        const auto& art = outcome.artifact;
        const auto name = to_string(stage);
        result.record.stages.push_back(outcome.record);
        try {
            switch (stage) {
                case Stage::Tasks:
                    for (const auto& t : Json::parse(art))
                        b.tasks.push_back({t.at("id").get<std::string>(), t.at("instruction").get<std::string>(),
                                           "v-" + t.at("id").get<std::string>()});
                    if (b.tasks.empty()) throw StageFailed(name, "no tasks");
                    break;
                case Stage::Schema:
                    b.schema = parse_schema(art);
                    if (b.schema.tables.empty()) throw StageFailed(name, "no tables");
                    break;
                case Stage::Seed: b.seed = parse_seed(art); break;
                case Stage::Toolset:
                    for (auto t : Json::parse(art)) {
                        t["plan"] = Json::array();
                        b.toolset.push_back(tool_from_json(t));
                    }
                    if (b.toolset.empty()) throw StageFailed(name, "no tools");
                    break;
                case Stage::Plans: {
                    StageEvaluation scratch;
                    std::map<std::string, Json> raw;
                    b.toolset = merge_plans(b, Json::parse(art), scratch, raw);
                    if (b.toolset.empty()) throw StageFailed(name, "no implemented tools");
                    break;
                }
                case Stage::Verification: {
                    const auto j = Json::parse(art);
                    std::vector<TaskSpec> kept;
                    for (const auto& task : b.tasks) {
                        if (!j.contains(task.id)) continue;
                        auto spec = verification_from_json(j[task.id].at("spec"));
                        spec.id = task.verification_ref;
                        b.verifications[spec.id] = std::move(spec);
                        if (j[task.id].contains("golden"))
                            if (auto g = golden_from(j[task.id]["golden"])) b.golden[task.id] = *g;
                        kept.push_back(task);
                    }
                    b.tasks = std::move(kept);
                    if (b.tasks.empty()) throw StageFailed(name, "no verifiable tasks");
                    break;
                }
            }
        } catch (const StageFailed&) {
            throw;
        } catch (const std::exception& ex) {
            throw StageFailed(name, ex.what());
        }
        context[name] = art;
    }

    const auto report = validate_bundle(b, options.validation);
    for (const auto& v : report.violations)
        if (v.severity == Severity::Error) throw StageFailed("bundle", v.location + ": " + v.code + ": " + v.message);
    try {
        ScratchDir scratch;
        ProvisionOptions po;
        po.root = scratch.path();
        po.ddl_threshold = 0;
        po.insert_threshold = 0;
        provision(b, "startup", po);
    } catch (const Error& ex) {
        throw StageFailed("startup", ex.what());
    }
    return result;
}

Json synthesis_report(const std::vector<SynthesisRecord>& records) {
    Json stages = Json::array();
    double total = 0;
    for (auto stage : kStageOrder) {
        std::size_t n = 0, ok = 0;
        double trials = 0, cost = 0;
        for (const auto& r : records)
            for (const auto& s : r.stages)
                if (s.stage == stage) {
                    ++n;
                    ok += s.success;
                    trials += s.attempts;
                    cost += s.cost_usd;
                }
        total += cost;
        stages.push_back({{"stage", to_string(stage)},
                          {"environments", n},
                          {"success_pct", n ? 100.0 * static_cast<double>(ok) / static_cast<double>(n) : 0.0},
                          {"mean_trials", n ? trials / static_cast<double>(n) : 0.0},
                          {"cost_usd", cost}});
    }
    return {{"environments", records.size()}, {"stages", stages}, {"total_cost_usd", total}};
}

// Dedup

std::vector<double> hashed_embedding(const std::string& text, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
        for (unsigned char c : word) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        v[h % dim] += 1.0;
        word.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c))
            word += static_cast<char>(std::tolower(c));
        else
            flush();
    }
    flush();
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm > 0)
        for (double& x : v) x /= std::sqrt(norm);
    return v;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) dot += a[i] * b[i];
    for (double x : a) na += x * x;
    for (double x : b) nb += x * x;
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string scenario_text(const Scenario& s) { return s.name + "\n" + s.description; }

DedupResult dedup_scenarios(const std::vector<Scenario>& candidates, const Embedder& embedder,
                            const DedupOptions& options) {
    DedupResult r;
    std::vector<std::vector<double>> kept_vectors;
    std::map<std::string, std::size_t> per_category;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        if (options.accept && !options.accept(c)) {
            r.dropped[i] = "filtered";
            continue;
        }
        std::optional<std::size_t> cap = options.default_cap;
        if (const auto it = options.category_caps.find(c.category); it != options.category_caps.end()) cap = it->second;
        if (cap && per_category[c.category] >= *cap) {
            r.dropped[i] = "category cap reached for " + c.category;
            continue;
        }
        auto v = embedder(scenario_text(c));
        bool similar = false;
        for (std::size_t k = 0; k < kept_vectors.size(); ++k) {
            if (cosine_similarity(v, kept_vectors[k]) >= options.threshold) {
                r.dropped[i] = "similar to candidate " + std::to_string(r.kept[k]);
                similar = true;
                break;
            }
        }
        if (similar) continue;
        r.kept.push_back(i);
        kept_vectors.push_back(std::move(v));
        ++per_category[c.category];
    }
    return r;
}

std::vector<Scenario> load_scenarios(const fs::path& file) {
    const auto text = read_text_file(file);
    std::vector<Scenario> out;
    const auto whole = Json::parse(text, nullptr, false);
    if (!whole.is_discarded() && whole.is_array()) {
        for (const auto& j : whole) out.push_back(scenario_from_json(j));
        return out;
    }
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError(file.filename().string(), "line " + std::to_string(n), "not JSON");
        out.push_back(scenario_from_json(j));
    }
    return out;
}

// Stats

Summary summarize(std::vector<double> v) {
    if (v.empty()) throw EmptySet();
    std::sort(v.begin(), v.end());
    Summary s;
    const auto n = v.size();
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(n);
    s.median = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
    const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(n)));
    s.p90 = v[std::max<std::size_t>(rank, 1) - 1];
    return s;
}

namespace {
Json summary_json(const Summary& s) { return {{"mean", s.mean}, {"median", s.median}, {"p90", s.p90}}; }
}  // namespace

Json StatsReport::to_json() const {
    return {{"bundles", bundles},
            {"tables", summary_json(tables)},
            {"records", summary_json(records)},
            {"tools", summary_json(tools)},
            {"tasks", summary_json(tasks)}};
}

StatsReport bundle_stats(const std::vector<EnvironmentBundle>& bundles) {
    if (bundles.empty()) throw EmptySet();
    std::vector<double> tables, records, tools, tasks;
    for (const auto& b : bundles) {
        tables.push_back(static_cast<double>(b.schema.tables.size()));
        records.push_back(static_cast<double>(b.seed.statement_count()));
        tools.push_back(static_cast<double>(b.toolset.size()));
        tasks.push_back(static_cast<double>(b.tasks.size()));
    }
    StatsReport r;
    r.bundles = bundles.size();
    r.tables = summarize(tables);
    r.records = summarize(records);
    r.tools = summarize(tools);
    r.tasks = summarize(tasks);
    return r;
}

}  // namespace awm
