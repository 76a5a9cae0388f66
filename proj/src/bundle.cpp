#include "awm/bundle.hpp"

#include <algorithm>
#include <fstream>

#include "awm/errors.hpp"
#include "awm/sql_text.hpp"

namespace awm {

namespace fs = std::filesystem;

namespace {

// Field access with positions reported as JSON pointers.
struct Reader {
    std::string file;

    [[noreturn]] void fail(const std::string& where, const std::string& what) const {
        throw ParseError(file, where.empty() ? "/" : where, what);
    }

    const Json& field(const Json& j, const std::string& key, const std::string& where) const {
        if (!j.is_object()) fail(where, "expected object");
        auto it = j.find(key);
        if (it == j.end()) fail(where + "/" + key, "missing field");
        return *it;
    }

    std::string text(const Json& j, const std::string& key, const std::string& where) const {
        const auto& v = field(j, key, where);
        if (!v.is_string()) fail(where + "/" + key, "expected string");
        return v.get<std::string>();
    }

    std::string text_or(const Json& j, const std::string& key, const std::string& where,
                        const std::string& fallback) const {
        if (!j.contains(key)) return fallback;
        return text(j, key, where);
    }

    bool flag_or(const Json& j, const std::string& key, const std::string& where, bool fallback) const {
        if (!j.contains(key)) return fallback;
        const auto& v = j.at(key);
        if (!v.is_boolean()) fail(where + "/" + key, "expected boolean");
        return v.get<bool>();
    }

    std::vector<std::string> strings_or_empty(const Json& j, const std::string& key,
                                              const std::string& where) const {
        std::vector<std::string> out;
        if (!j.contains(key)) return out;
        const auto& v = j.at(key);
        if (!v.is_array()) fail(where + "/" + key, "expected array");
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string()) fail(where + "/" + key + "/" + std::to_string(i), "expected string");
            out.push_back(v[i].get<std::string>());
        }
        return out;
    }

    const Json& array(const Json& j, const std::string& key, const std::string& where) const {
        const auto& v = field(j, key, where);
        if (!v.is_array()) fail(where + "/" + key, "expected array");
        return v;
    }
};

Json parse_json_file(const fs::path& path, const std::string& name) {
    const auto text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(name, "byte " + std::to_string(e.byte), e.what());
    }
}

std::string one_line(const std::string& text) {
    std::string out = text;
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return out;
}

Requirement requirement_from(const std::string& s, const Reader& r, const std::string& where) {
    if (s == "none") return Requirement::None;
    if (s == "nonempty") return Requirement::NonEmpty;
    if (s == "truthy") return Requirement::Truthy;
    r.fail(where, "unknown requirement '" + s + "'");
}

std::string to_string(Requirement req) {
    switch (req) {
        case Requirement::None: return "none";
        case Requirement::NonEmpty: return "nonempty";
        case Requirement::Truthy: return "truthy";
    }
    return "none";
}

ResponseShape shape_from(const std::string& s, const Reader& r, const std::string& where) {
    if (s == "rows") return ResponseShape::Rows;
    if (s == "row") return ResponseShape::Row;
    if (s == "value") return ResponseShape::Value;
    if (s == "affected") return ResponseShape::Affected;
    r.fail(where, "unknown response shape '" + s + "'");
}

std::string to_string(ResponseShape shape) {
    switch (shape) {
        case ResponseShape::Rows: return "rows";
        case ResponseShape::Row: return "row";
        case ResponseShape::Value: return "value";
        case ResponseShape::Affected: return "affected";
    }
    return "rows";
}

SignalRule rule_from(const std::string& s, const Reader& r, const std::string& where) {
    if (s == "set_difference") return SignalRule::SetDifference;
    if (s == "count_delta") return SignalRule::CountDelta;
    if (s == "exists") return SignalRule::Exists;
    if (s == "scalar_equals") return SignalRule::ScalarEquals;
    r.fail(where, "unknown signal rule '" + s + "'");
}

ToolDef tool_from(const Json& j, const Reader& r, const std::string& where) {
    ToolDef tool;
    tool.name = r.text(j, "name", where);
    tool.summary = r.text_or(j, "summary", where, "");
    tool.description = r.text_or(j, "description", where, "");
    tool.tags = r.strings_or_empty(j, "tags", where);
    tool.mutating = r.flag_or(j, "mutating", where, false);
    if (j.contains("constants")) {
        tool.constants = j.at("constants");
        if (!tool.constants.is_object()) r.fail(where + "/constants", "expected object");
    }
    if (j.contains("params")) {
        const auto& params = r.array(j, "params", where);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto w = where + "/params/" + std::to_string(i);
            ParamSpec p;
            p.name = r.text(params[i], "name", w);
            try {
                p.type = semantic_type_from(r.text(params[i], "type", w));
            } catch (const Error& e) {
                r.fail(w + "/type", e.what());
            }
            p.required = r.flag_or(params[i], "required", w, false);
            p.nullable = r.flag_or(params[i], "nullable", w, false);
            p.default_value = params[i].value("default", Json());
            p.description = r.text_or(params[i], "description", w, "");
            p.example = params[i].value("example", Json());
            tool.params.push_back(std::move(p));
        }
    }
    const auto& plan = r.array(j, "plan", where);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto w = where + "/plan/" + std::to_string(i);
        PlanStatement s;
        s.id = r.text_or(plan[i], "id", w, "s" + std::to_string(i));
        s.sql = r.text(plan[i], "sql", w);
        s.require = requirement_from(r.text_or(plan[i], "require", w, "none"), r, w + "/require");
        s.error = r.text_or(plan[i], "error", w, "");
        tool.plan.push_back(std::move(s));
    }
    if (j.contains("response")) {
        const auto& response = r.array(j, "response", where);
        for (std::size_t i = 0; i < response.size(); ++i) {
            const auto w = where + "/response/" + std::to_string(i);
            ResponseField f;
            f.name = r.text(response[i], "name", w);
            f.statement = r.text(response[i], "statement", w);
            f.shape = shape_from(r.text(response[i], "shape", w), r, w + "/shape");
            if (response[i].contains("columns")) {
                const auto& cols = r.array(response[i], "columns", w);
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    const auto wc = w + "/columns/" + std::to_string(c);
                    ColumnMapping m;
                    m.column = r.text(cols[c], "column", wc);
                    try {
                        m.type = semantic_type_from(r.text(cols[c], "type", wc));
                    } catch (const Error& e) {
                        r.fail(wc + "/type", e.what());
                    }
                    f.columns.push_back(std::move(m));
                }
            }
            tool.response.push_back(std::move(f));
        }
    }
    return tool;
}

VerificationSpec verification_from(const Json& j, const Reader& r, const std::string& where) {
    VerificationSpec spec;
    spec.id = r.text(j, "id", where);
    spec.success_criteria = r.text_or(j, "success_criteria", where, "");
    spec.failure_criteria = r.text_or(j, "failure_criteria", where, "");
    const auto& probes = r.array(j, "probes", where);
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto w = where + "/probes/" + std::to_string(i);
        Probe p;
        p.name = r.text(probes[i], "name", w);
        const auto target = r.text(probes[i], "target", w);
        if (target == "initial") p.target = ProbeTarget::Initial;
        else if (target == "final") p.target = ProbeTarget::Final;
        else r.fail(w + "/target", "expected 'initial' or 'final'");
        p.query = r.text(probes[i], "query", w);
        p.projection = r.strings_or_empty(probes[i], "projection", w);
        spec.probes.push_back(std::move(p));
    }
    if (j.contains("signals")) {
        const auto& signals = r.array(j, "signals", where);
        for (std::size_t i = 0; i < signals.size(); ++i) {
            const auto w = where + "/signals/" + std::to_string(i);
            DerivedSignal s;
            s.name = r.text(signals[i], "name", w);
            s.rule = rule_from(r.text(signals[i], "rule", w), r, w + "/rule");
            s.left = r.text(signals[i], "left", w);
            s.right = r.text_or(signals[i], "right", w, "");
            s.key = r.strings_or_empty(signals[i], "key", w);
            s.value = signals[i].value("value", Json());
            if (signals[i].contains("expect")) {
                const auto& e = signals[i].at("expect");
                Expectation x;
                x.op = r.text(e, "op", w + "/expect");
                x.value = e.value("value", Json());
                s.expect = std::move(x);
            }
            s.required = r.flag_or(signals[i], "required", w, false);
            s.guard = r.flag_or(signals[i], "guard", w, false);
            spec.signals.push_back(std::move(s));
        }
    }
    return spec;
}

TaskSpec task_from(const Json& j, const Reader& r, const std::string& where) {
    TaskSpec t;
    t.id = r.text(j, "id", where);
    t.instruction = r.text(j, "instruction", where);
    t.verification_ref = r.text(j, "verification_ref", where);
    return t;
}

Scenario scenario_from(const Json& j, const Reader& r, const std::string& where) {
    Scenario s;
    s.name = r.text(j, "name", where);
    s.url_hint = r.text_or(j, "url_hint", where, "");
    s.description = r.text_or(j, "description", where, "");
    s.category = r.text_or(j, "category", where, "");
    return s;
}

}  // namespace

std::string to_string(SemanticType type) {
    switch (type) {
        case SemanticType::Integer: return "integer";
        case SemanticType::Number: return "number";
        case SemanticType::Text: return "text";
        case SemanticType::Boolean: return "boolean";
    }
    return "text";
}

SemanticType semantic_type_from(const std::string& name) {
    if (name == "integer") return SemanticType::Integer;
    if (name == "number") return SemanticType::Number;
    if (name == "text") return SemanticType::Text;
    if (name == "boolean") return SemanticType::Boolean;
    throw Error("unknown semantic type '" + name + "'");
}

std::string to_string(SignalRule rule) {
    switch (rule) {
        case SignalRule::SetDifference: return "set_difference";
        case SignalRule::CountDelta: return "count_delta";
        case SignalRule::Exists: return "exists";
        case SignalRule::ScalarEquals: return "scalar_equals";
    }
    return "exists";
}

std::size_t SchemaSpec::statement_count() const {
    std::size_t n = 0;
    for (const auto& t : tables) n += 1 + t.indexes.size();
    return n;
}

std::size_t SeedSpec::statement_count() const {
    std::size_t n = 0;
    for (const auto& t : tables) n += t.statements.size();
    return n;
}

const ParamSpec* ToolDef::find_param(const std::string& param) const {
    for (const auto& p : params)
        if (p.name == param) return &p;
    return nullptr;
}

const Probe* VerificationSpec::find_probe(const std::string& probe) const {
    for (const auto& p : probes)
        if (p.name == probe) return &p;
    return nullptr;
}

const ToolDef* EnvironmentBundle::find_tool(const std::string& name) const {
    for (const auto& t : toolset)
        if (t.name == name) return &t;
    return nullptr;
}

const TaskSpec* EnvironmentBundle::find_task(const std::string& id) const {
    for (const auto& t : tasks)
        if (t.id == id) return &t;
    return nullptr;
}

const VerificationSpec* EnvironmentBundle::verification_for(const TaskSpec& task) const {
    auto it = verifications.find(task.verification_ref);
    return it == verifications.end() ? nullptr : &it->second;
}

// JSON

Json to_json(const ToolDef& tool) {
    Json params = Json::array();
    for (const auto& p : tool.params) {
        Json jp = {{"name", p.name},
                   {"type", to_string(p.type)},
                   {"required", p.required},
                   {"nullable", p.nullable},
                   {"description", p.description}};
        if (!p.default_value.is_null()) jp["default"] = p.default_value;
        if (!p.example.is_null()) jp["example"] = p.example;
        params.push_back(std::move(jp));
    }
    Json plan = Json::array();
    for (const auto& s : tool.plan) {
        Json js = {{"id", s.id}, {"sql", s.sql}, {"require", to_string(s.require)}};
        if (!s.error.empty()) js["error"] = s.error;
        plan.push_back(std::move(js));
    }
    Json response = Json::array();
    for (const auto& f : tool.response) {
        Json cols = Json::array();
        for (const auto& c : f.columns) cols.push_back({{"column", c.column}, {"type", to_string(c.type)}});
        response.push_back({{"name", f.name}, {"statement", f.statement}, {"shape", to_string(f.shape)},
                            {"columns", std::move(cols)}});
    }
    return {{"name", tool.name},
            {"summary", tool.summary},
            {"description", tool.description},
            {"tags", tool.tags},
            {"mutating", tool.mutating},
            {"constants", tool.constants},
            {"params", std::move(params)},
            {"plan", std::move(plan)},
            {"response", std::move(response)}};
}

ToolDef tool_from_json(const Json& j) { return tool_from(j, Reader{"toolset"}, ""); }

Json to_json(const VerificationSpec& spec) {
    Json probes = Json::array();
    for (const auto& p : spec.probes)
        probes.push_back({{"name", p.name},
                          {"target", p.target == ProbeTarget::Initial ? "initial" : "final"},
                          {"query", p.query},
                          {"projection", p.projection}});
    Json signals = Json::array();
    for (const auto& s : spec.signals) {
        Json js = {{"name", s.name}, {"rule", to_string(s.rule)}, {"left", s.left},
                   {"required", s.required}, {"guard", s.guard}};
        if (!s.right.empty()) js["right"] = s.right;
        if (!s.key.empty()) js["key"] = s.key;
        if (!s.value.is_null()) js["value"] = s.value;
        if (s.expect) {
            Json e = {{"op", s.expect->op}};
            if (!s.expect->value.is_null()) e["value"] = s.expect->value;
            js["expect"] = std::move(e);
        }
        signals.push_back(std::move(js));
    }
    return {{"id", spec.id},
            {"probes", std::move(probes)},
            {"signals", std::move(signals)},
            {"success_criteria", spec.success_criteria},
            {"failure_criteria", spec.failure_criteria}};
}

VerificationSpec verification_from_json(const Json& j) { return verification_from(j, Reader{"verify"}, ""); }

Json to_json(const TaskSpec& task) {
    return {{"id", task.id}, {"instruction", task.instruction}, {"verification_ref", task.verification_ref}};
}

TaskSpec task_from_json(const Json& j) { return task_from(j, Reader{"tasks"}, ""); }

Json to_json(const Scenario& s) {
    return {{"name", s.name}, {"url_hint", s.url_hint}, {"description", s.description}, {"category", s.category}};
}

Scenario scenario_from_json(const Json& j) { return scenario_from(j, Reader{"scenario"}, ""); }

// SQL files

std::string schema_text(const SchemaSpec& schema) {
    std::string out;
    for (std::size_t i = 0; i < schema.tables.size(); ++i) {
        if (i) out += "\n";
        out += schema.tables[i].ddl + ";\n";
        for (const auto& idx : schema.tables[i].indexes) out += idx + ";\n";
    }
    return out;
}

SchemaSpec parse_schema(const std::string& text) {
    SchemaSpec schema;
    for (const auto& item : sql::scan_script(text)) {
        if (item.kind != sql::ScriptItem::Kind::Statement) continue;
        const auto info = sql::classify_create(item.text);
        const auto where = "line " + std::to_string(item.line);
        switch (info.kind) {
            case sql::CreateInfo::Kind::Table:
                schema.tables.push_back({info.name, item.text, {}});
                break;
            case sql::CreateInfo::Kind::Index:
            case sql::CreateInfo::Kind::Trigger: {
                auto it = std::find_if(schema.tables.begin(), schema.tables.end(), [&](const TableSpec& t) {
                    return sql::to_lower(t.name) == sql::to_lower(info.on_table);
                });
                if (it == schema.tables.end())
                    throw ParseError("schema", where, "index or trigger on undeclared table '" + info.on_table + "'");
                it->indexes.push_back(item.text);
                break;
            }
            default:
                throw ParseError("schema", where, "unsupported statement in schema");
        }
    }
    return schema;
}

std::string seed_text(const SeedSpec& seed) {
    std::string out;
    for (std::size_t i = 0; i < seed.tables.size(); ++i) {
        const auto& t = seed.tables[i];
        if (i) out += "\n";
        out += "-- @table " + t.table + "\n";
        if (!t.rationale.empty()) out += "-- @rationale " + one_line(t.rationale) + "\n";
        for (const auto& s : t.statements) out += s + ";\n";
    }
    return out;
}

SeedSpec parse_seed(const std::string& text) {
    SeedSpec seed;
    bool implicit = false;
    std::string pending_rationale;
    for (const auto& item : sql::scan_script(text)) {
        if (item.kind == sql::ScriptItem::Kind::Directive) {
            if (item.key == "table") {
                seed.tables.push_back({item.text, pending_rationale, {}});
                pending_rationale.clear();
                implicit = false;
            } else if (item.key == "rationale") {
                if (seed.tables.empty() || !seed.tables.back().statements.empty()) pending_rationale = item.text;
                else seed.tables.back().rationale = item.text;
            }
            continue;
        }
        const auto target = sql::insert_target(item.text).value_or("");
        if (seed.tables.empty() || (implicit && target != seed.tables.back().table)) {
            seed.tables.push_back({target, pending_rationale, {}});
            pending_rationale.clear();
            implicit = true;
        }
        seed.tables.back().statements.push_back(item.text);
    }
    return seed;
}

// Directory layout

EnvironmentBundle load_bundle(const fs::path& dir) {
    auto require = [&](const char* file, const char* name) {
        const auto path = dir / file;
        if (!fs::exists(path)) throw MissingFile(name);
        return path;
    };
    const auto manifest_path = require("manifest.json", "manifest");
    const auto schema_path = require("schema.sql", "schema");
    const auto seed_path = require("seed.sql", "seed");
    const auto toolset_path = require("toolset.json", "toolset");
    const auto tasks_path = require("tasks.json", "tasks");
    const auto verify_dir = dir / "verify";
    if (!fs::is_directory(verify_dir)) throw MissingFile("verify");

    EnvironmentBundle b;
    {
        const Reader r{"manifest"};
        const auto j = parse_json_file(manifest_path, "manifest");
        b.manifest.format_version = r.text(j, "format_version", "");
        b.manifest.scenario = scenario_from(r.field(j, "scenario", ""), r, "/scenario");
    }
    b.schema = parse_schema(read_text_file(schema_path));
    b.seed = parse_seed(read_text_file(seed_path));
    {
        const Reader r{"toolset"};
        const auto j = parse_json_file(toolset_path, "toolset");
        if (!j.is_array()) r.fail("", "expected array of tools");
        for (std::size_t i = 0; i < j.size(); ++i) b.toolset.push_back(tool_from(j[i], r, "/" + std::to_string(i)));
    }
    {
        const Reader r{"tasks"};
        const auto j = parse_json_file(tasks_path, "tasks");
        if (!j.is_array()) r.fail("", "expected array of tasks");
        for (std::size_t i = 0; i < j.size(); ++i) b.tasks.push_back(task_from(j[i], r, "/" + std::to_string(i)));
    }
    std::vector<fs::path> verify_files;
    for (const auto& entry : fs::directory_iterator(verify_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json") verify_files.push_back(entry.path());
    std::sort(verify_files.begin(), verify_files.end());
    for (const auto& path : verify_files) {
        const auto name = "verify/" + path.filename().string();
        auto spec = verification_from(parse_json_file(path, name), Reader{name}, "");
        if (b.verifications.count(spec.id)) throw CrossRefError("duplicate verification id '" + spec.id + "'");
        auto id = spec.id;
        b.verifications.emplace(std::move(id), std::move(spec));
    }
    if (const auto golden_path = dir / "golden.json"; fs::exists(golden_path)) {
        const Reader r{"golden"};
        const auto j = parse_json_file(golden_path, "golden");
        if (!j.is_object()) r.fail("", "expected object keyed by task id");
        for (const auto& [task_id, entry] : j.items()) {
            const auto w = "/" + task_id;
            GoldenScript script;
            script.answer = r.text_or(entry, "answer", w, "");
            const auto& calls = r.array(entry, "calls", w);
            for (std::size_t i = 0; i < calls.size(); ++i) {
                const auto wc = w + "/calls/" + std::to_string(i);
                ScriptedCall c;
                c.tool = r.text(calls[i], "tool", wc);
                c.arguments = calls[i].value("arguments", Json::object());
                script.calls.push_back(std::move(c));
            }
            b.golden.emplace(task_id, std::move(script));
        }
    }

    for (const auto& task : b.tasks) {
        if (!b.verifications.count(task.verification_ref))
            throw CrossRefError("task '" + task.id + "' references unknown verification '" + task.verification_ref + "'");
    }
    for (const auto& [task_id, script] : b.golden) {
        if (!b.find_task(task_id)) throw CrossRefError("golden script for unknown task '" + task_id + "'");
    }
    return b;
}

namespace {

struct BundleFiles {
    std::vector<std::pair<std::string, std::string>> files;  // relative path, content
};

BundleFiles render(const EnvironmentBundle& b) {
    BundleFiles out;
    out.files.emplace_back("manifest.json",
                           canonical_file_text({{"format_version", b.manifest.format_version},
                                                {"scenario", to_json(b.manifest.scenario)}}));
    out.files.emplace_back("schema.sql", schema_text(b.schema));
    out.files.emplace_back("seed.sql", seed_text(b.seed));
    Json tools = Json::array();
    for (const auto& t : b.toolset) tools.push_back(to_json(t));
    out.files.emplace_back("toolset.json", canonical_file_text(tools));
    Json tasks = Json::array();
    for (const auto& t : b.tasks) tasks.push_back(to_json(t));
    out.files.emplace_back("tasks.json", canonical_file_text(tasks));
    std::set<std::string> used_names;
    for (const auto& [id, spec] : b.verifications) {
        std::string stem = id;
        for (const auto& t : b.tasks) {
            if (t.verification_ref == id && !used_names.count(t.id)) {
                stem = t.id;
                break;
            }
        }
        used_names.insert(stem);
        out.files.emplace_back("verify/" + stem + ".json", canonical_file_text(to_json(spec)));
    }
    if (!b.golden.empty()) {
        Json golden = Json::object();
        for (const auto& [task_id, script] : b.golden) {
            Json calls = Json::array();
            for (const auto& c : script.calls) calls.push_back({{"tool", c.tool}, {"arguments", c.arguments}});
            golden[task_id] = {{"calls", std::move(calls)}, {"answer", script.answer}};
        }
        out.files.emplace_back("golden.json", canonical_file_text(golden));
    }
    return out;
}

}  // namespace

void save_bundle(const EnvironmentBundle& bundle, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir / "verify", ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& entry : fs::directory_iterator(dir / "verify"))
        if (entry.path().extension() == ".json") fs::remove(entry.path(), ec);
    fs::remove(dir / "golden.json", ec);
    for (const auto& [rel, content] : render(bundle).files) write_text_file(dir / rel, content);
}

std::string bundle_digest(const EnvironmentBundle& bundle) {
    std::string all;
    for (const auto& [rel, content] : render(bundle).files) {
        all += rel;
        all.push_back('\0');
        all += content;
        all.push_back('\0');
    }
    return sha256_hex(all);
}

}  // namespace awm
