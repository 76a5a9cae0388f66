#include <algorithm>
#include <cctype>
#include <map>

#include "awm/bundle.hpp"
#include "awm/errors.hpp"
#include "awm/sql_text.hpp"
#include "awm/sqlite.hpp"

namespace awm {

namespace {

struct Collector {
    std::vector<Violation>& out;
    void error(std::string code, std::string location, std::string message) {
        out.push_back({std::move(code), Severity::Error, std::move(location), std::move(message)});
    }
    void warning(std::string code, std::string location, std::string message) {
        out.push_back({std::move(code), Severity::Warning, std::move(location), std::move(message)});
    }
};

std::vector<std::string> table_columns(sqlite::Database& db, const std::string& table) {
    std::vector<std::string> cols;
    auto st = db.prepare("SELECT name FROM pragma_table_info(?1)");
    st.bind(1, table);
    while (st.step()) cols.push_back(st.column_text(0));
    return cols;
}

std::vector<std::string> parent_tables(sqlite::Database& db, const std::string& table) {
    std::vector<std::string> parents;
    auto st = db.prepare("SELECT DISTINCT \"table\" FROM pragma_foreign_key_list(?1)");
    st.bind(1, table);
    while (st.step()) parents.push_back(st.column_text(0));
    return parents;
}

std::vector<std::string> result_columns(const sqlite::Statement& st) {
    std::vector<std::string> cols;
    for (int i = 0; i < st.column_count(); ++i) cols.push_back(st.column_name(i));
    return cols;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

bool json_matches(SemanticType type, const Json& v) {
    switch (type) {
        case SemanticType::Integer:
            return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<std::int64_t>(v.get<double>())));
        case SemanticType::Number: return v.is_number();
        case SemanticType::Text: return v.is_string();
        case SemanticType::Boolean: return v.is_boolean();
    }
    return false;
}

std::string normalize_words(const std::string& text) {
    std::string out = " ";
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            out.push_back(static_cast<char>(std::tolower(c)));
            in_word = true;
        } else if (in_word) {
            out.push_back(' ');
            in_word = false;
        }
    }
    if (out.back() != ' ') out.push_back(' ');
    return out;
}

bool is_temp_create(const std::string& sql) {
    const auto toks = sql::tokenize(sql);
    std::vector<std::string> words;
    for (const auto& t : toks)
        if (t.kind == sql::TokenKind::Word) {
            words.push_back(sql::to_upper(t.text));
            if (words.size() == 2) break;
        }
    return words.size() == 2 && words[0] == "CREATE" && (words[1] == "TEMP" || words[1] == "TEMPORARY");
}

const std::set<std::string> kExpectationOps = {"eq", "ne", "ge", "le", "nonempty", "empty", "count"};

void check_manifest(const EnvironmentBundle& b, const ValidationOptions& opt, Collector& c) {
    if (b.manifest.format_version != kBundleFormat)
        c.error("FormatVersionUnsupported", "manifest/format_version",
                "expected " + std::string(kBundleFormat) + ", found " + b.manifest.format_version);
    if (b.manifest.scenario.name.empty()) c.error("ScenarioNameEmpty", "manifest/scenario/name", "scenario name is empty");
    if (!opt.categories.count(b.manifest.scenario.category))
        c.error("CategoryUnknown", "manifest/scenario/category",
                "category '" + b.manifest.scenario.category + "' is not in the registry");
}

// Applies the schema to a scratch database and reports DDL problems.
void check_schema(const EnvironmentBundle& b, const ValidationOptions& opt, sqlite::Database& db, Collector& c) {
    if (b.schema.tables.empty()) c.warning("EmptySchema", "schema", "schema declares no tables");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < b.schema.tables.size(); ++i) {
        const auto& t = b.schema.tables[i];
        const auto where = "schema/" + t.name;
        if (!seen.insert(sql::to_lower(t.name)).second) {
            c.error("DuplicateTable", where, "table declared twice");
            continue;
        }
        try {
            db.exec(t.ddl);
        } catch (const sqlite::SqlError& e) {
            c.error("DdlInvalid", where, e.what());
            continue;
        }
        for (std::size_t k = 0; k < t.indexes.size(); ++k) {
            try {
                db.exec(t.indexes[k]);
            } catch (const sqlite::SqlError& e) {
                c.error("DdlInvalid", where + "/index/" + std::to_string(k), e.what());
            }
        }
        for (const auto& col : table_columns(db, t.name)) {
            if (is_auth_column(col, opt.auth_column_terms))
                c.error("AuthFieldForbidden", where + "/" + col, "authentication-related column '" + col + "'");
        }
    }
}

void check_seed(const EnvironmentBundle& b, sqlite::Database& db, Collector& c) {
    std::map<std::string, std::size_t> position;  // lowercased table -> first section index
    for (std::size_t i = 0; i < b.seed.tables.size(); ++i)
        position.emplace(sql::to_lower(b.seed.tables[i].table), i);

    for (std::size_t i = 0; i < b.seed.tables.size(); ++i) {
        const auto& section = b.seed.tables[i];
        const auto where = "seed/" + section.table;
        const bool known = std::any_of(b.schema.tables.begin(), b.schema.tables.end(), [&](const TableSpec& t) {
            return sql::to_lower(t.name) == sql::to_lower(section.table);
        });
        if (!known) {
            c.error("SeedUnknownTable", where, "seed section for table not in schema");
            continue;
        }
        for (const auto& parent : parent_tables(db, section.table)) {
            auto it = position.find(sql::to_lower(parent));
            if (it != position.end() && it->second > i && sql::to_lower(parent) != sql::to_lower(section.table))
                c.error("SeedOrderViolatesForeignKeys", where,
                        "rows for '" + section.table + "' precede rows of parent table '" + parent + "'");
        }
        for (std::size_t k = 0; k < section.statements.size(); ++k) {
            const auto& stmt = section.statements[k];
            const auto w = where + "/" + std::to_string(k);
            const auto target = sql::insert_target(stmt);
            if (!target) {
                c.error("SeedStatementInvalid", w, "seed statements must be INSERTs");
                continue;
            }
            if (sql::to_lower(*target) != sql::to_lower(section.table)) {
                c.error("SeedTableMismatch", w, "INSERT into '" + *target + "' under section '" + section.table + "'");
                continue;
            }
            try {
                db.prepare(stmt);
            } catch (const sqlite::SqlError& e) {
                c.error("SeedStatementInvalid", w, e.what());
            }
        }
    }
}

void check_toolset(const EnvironmentBundle& b, sqlite::Database& db, Collector& c) {
    if (b.toolset.empty()) c.warning("EmptyToolset", "toolset", "bundle exposes no tools");
    std::set<std::string> names;
    for (const auto& tool : b.toolset) {
        const auto where = "toolset/" + tool.name;
        if (tool.name.empty() || !std::all_of(tool.name.begin(), tool.name.end(), [](unsigned char ch) {
                return std::isalnum(ch) || ch == '_' || ch == '-';
            }))
            c.error("ToolNameInvalid", where, "tool names are non-empty identifiers");
        if (!names.insert(tool.name).second) c.error("DuplicateTool", where, "tool name declared twice");
        if (tool.summary.size() > 80) c.error("SummaryTooLong", where + "/summary", "summary exceeds 80 characters");
        if (tool.description.size() > 200 || tool.description.find('\n') != std::string::npos)
            c.error("DescriptionInvalid", where + "/description", "description must be one line of at most 200 characters");

        std::set<std::string> params;
        for (const auto& p : tool.params) {
            const auto wp = where + "/params/" + p.name;
            if (!params.insert(p.name).second) c.error("DuplicateParam", wp, "parameter declared twice");
            if (!p.default_value.is_null() && !json_matches(p.type, p.default_value))
                c.error("ParamDefaultInvalid", wp, "default does not match type " + to_string(p.type));
            if (!p.example.is_null() && !json_matches(p.type, p.example))
                c.error("ParamExampleInvalid", wp, "example does not match type " + to_string(p.type));
        }

        if (tool.plan.empty()) c.error("PlanEmpty", where + "/plan", "plan has no statements");
        std::map<std::string, std::vector<std::string>> produced;  // statement id -> result columns
        db.exec("SAVEPOINT tool_check");
        for (std::size_t i = 0; i < tool.plan.size(); ++i) {
            const auto& s = tool.plan[i];
            const auto ws = where + "/plan/" + std::to_string(i);
            if (produced.count(s.id)) c.error("DuplicateStatementId", ws, "statement id '" + s.id + "' reused");
            if (!tool.mutating) {
                const auto verb = sql::find_write_verb(s.sql);
                if (verb && !(*verb == "CREATE" && is_temp_create(s.sql)))
                    c.error("ReadOnlyToolWrites", ws, "non-mutating tool issues " + *verb);
            }
            try {
                auto st = db.prepare(s.sql);
                for (int p = 1; p <= st.parameter_count(); ++p) {
                    const auto raw = st.parameter_name(p);
                    const auto name = raw.empty() ? std::string() : raw.substr(1);
                    const bool resolved = !name.empty() && (tool.find_param(name) || tool.constants.contains(name) ||
                                                            name == kCurrentUserBinding || name == kNowBinding);
                    if (!resolved)
                        c.error("UnresolvedBinding", ws, "binding '" + (raw.empty() ? "?" : raw) + "' resolves to nothing");
                }
                produced[s.id] = result_columns(st);
                // temp projections must exist for later statements to prepare
                if (is_temp_create(s.sql)) {
                    st.step();
                }
            } catch (const sqlite::SqlError& e) {
                const std::string msg = e.what();
                if (msg.find("no such table") != std::string::npos)
                    c.error("ToolPlanTableUnknown", ws, msg);
                else
                    c.error("PlanStatementInvalid", ws, msg);
                produced[s.id] = {};
            }
        }
        db.exec("ROLLBACK TO tool_check");
        db.exec("RELEASE tool_check");

        std::set<std::string> fields;
        for (const auto& f : tool.response) {
            const auto wf = where + "/response/" + f.name;
            if (!fields.insert(f.name).second) c.error("DuplicateResponseField", wf, "response field declared twice");
            auto it = produced.find(f.statement);
            if (it == produced.end()) {
                c.error("ResponseStatementUnknown", wf, "statement '" + f.statement + "' not in plan");
                continue;
            }
            if (f.shape == ResponseShape::Value && f.columns.size() != 1)
                c.error("ResponseShapeInvalid", wf, "value responses map exactly one column");
            if (f.shape == ResponseShape::Affected) continue;
            for (const auto& col : f.columns)
                if (!contains(it->second, col.column))
                    c.error("ResponseColumnUnknown", wf, "column '" + col.column + "' not produced by '" + f.statement + "'");
        }
    }
}

void check_tasks(const EnvironmentBundle& b, const ValidationOptions& opt, Collector& c) {
    std::set<std::string> ids;
    for (const auto& t : b.tasks) {
        const auto where = "tasks/" + t.id;
        if (!ids.insert(t.id).second) c.error("DuplicateTask", where, "task id declared twice");
        if (t.instruction.empty()) c.error("TaskInstructionEmpty", where, "instruction is empty");
        if (mentions_authentication(t.instruction, opt.auth_task_phrases))
            c.error("TaskMentionsAuth", where, "instruction refers to authentication");
        if (!b.verifications.count(t.verification_ref))
            c.error("TaskVerificationMissing", where, "verification '" + t.verification_ref + "' not found");
    }
}

void check_verifications(const EnvironmentBundle& b, sqlite::Database& db, Collector& c) {
    for (const auto& [id, spec] : b.verifications) {
        const auto where = "verify/" + id;
        std::map<std::string, std::vector<std::string>> probe_columns;
        for (const auto& p : spec.probes) {
            const auto wp = where + "/probes/" + p.name;
            if (probe_columns.count(p.name)) c.error("DuplicateProbe", wp, "probe declared twice");
            if (auto verb = sql::find_write_verb(p.query)) {
                c.error("ProbeNotReadOnly", wp, "probe uses write verb " + *verb);
                probe_columns[p.name] = {};
                continue;
            }
            try {
                auto st = db.prepare(p.query);
                if (!st.readonly()) c.error("ProbeNotReadOnly", wp, "probe is not a read-only statement");
                auto cols = result_columns(st);
                for (const auto& col : p.projection)
                    if (!contains(cols, col)) c.error("ProbeProjectionUnknown", wp, "projected column '" + col + "' not produced");
                probe_columns[p.name] = p.projection.empty() ? cols : p.projection;
            } catch (const sqlite::SqlError& e) {
                c.error("ProbeInvalid", wp, e.what());
                probe_columns[p.name] = {};
            }
        }
        std::set<std::string> signals;
        for (const auto& s : spec.signals) {
            const auto ws = where + "/signals/" + s.name;
            if (!signals.insert(s.name).second) c.error("DuplicateSignal", ws, "signal declared twice");
            const bool needs_right = s.rule == SignalRule::SetDifference || s.rule == SignalRule::CountDelta;
            if (!probe_columns.count(s.left)) c.error("SignalProbeUnknown", ws, "probe '" + s.left + "' not declared");
            if (needs_right && s.right.empty()) c.error("SignalProbeUnknown", ws, to_string(s.rule) + " needs a right-hand probe");
            if (!s.right.empty() && !probe_columns.count(s.right))
                c.error("SignalProbeUnknown", ws, "probe '" + s.right + "' not declared");
            if (s.rule == SignalRule::SetDifference && probe_columns.count(s.left)) {
                for (const auto& k : s.key)
                    if (!contains(probe_columns[s.left], k)) c.error("SignalKeyUnknown", ws, "key column '" + k + "' not in probe output");
            }
            if (s.expect && !kExpectationOps.count(s.expect->op))
                c.error("SignalExpectationInvalid", ws, "unknown expectation op '" + s.expect->op + "'");
            if ((s.required || s.guard) && !s.expect)
                c.error("SignalExpectationInvalid", ws, "required and guard signals need an expectation");
        }
    }
}

void check_golden(const EnvironmentBundle& b, Collector& c) {
    for (const auto& [task_id, script] : b.golden) {
        const auto where = "golden/" + task_id;
        if (!b.find_task(task_id)) c.error("GoldenUnknownTask", where, "no such task");
        for (std::size_t i = 0; i < script.calls.size(); ++i)
            if (!b.find_tool(script.calls[i].tool))
                c.error("GoldenUnknownTool", where + "/" + std::to_string(i), "tool '" + script.calls[i].tool + "' not in toolset");
    }
}

}  // namespace

bool ValidationReport::has_errors() const {
    return std::any_of(violations.begin(), violations.end(), [](const Violation& v) { return v.severity == Severity::Error; });
}

bool ValidationReport::has(const std::string& code) const {
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.code == code; });
}

Json ValidationReport::to_json() const {
    Json out = Json::array();
    for (const auto& v : violations)
        out.push_back({{"code", v.code},
                       {"severity", v.severity == Severity::Error ? "error" : "warning"},
                       {"location", v.location},
                       {"message", v.message}});
    return out;
}

std::set<std::string> ValidationOptions::default_categories() {
    return {"commerce", "lending", "booking", "travel", "finance", "social", "media", "productivity",
            "education", "health", "food", "entertainment", "real-estate", "logistics", "government",
            "sports", "other"};
}

std::vector<std::string> ValidationOptions::default_auth_phrases() {
    return {"log in", "login", "logout", "log out", "sign in", "signin", "sign out", "sign up", "signup",
            "password", "passcode", "authenticate", "authentication", "two factor", "2fa", "credentials"};
}

void ValidationOptions::load_categories(const std::filesystem::path& file) {
    const auto text = read_text_file(file);
    categories.clear();
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        auto line = text.substr(start, end - start);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        auto b = line.find_first_not_of(" \t");
        if (b != std::string::npos && line[b] != '#') categories.insert(line.substr(b));
        start = end + 1;
    }
}

bool mentions_authentication(const std::string& instruction, const std::vector<std::string>& phrases) {
    const auto text = normalize_words(instruction);
    return std::any_of(phrases.begin(), phrases.end(), [&](const std::string& phrase) {
        const auto needle = normalize_words(phrase);
        return needle.size() > 2 && text.find(needle) != std::string::npos;
    });
}

bool is_auth_column(const std::string& column, const std::vector<std::string>& terms) {
    const auto lower = sql::to_lower(column);
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= lower.size()) {
        auto end = lower.find('_', start);
        if (end == std::string::npos) end = lower.size();
        if (end > start) parts.push_back(lower.substr(start, end - start));
        start = end + 1;
    }
    for (const auto& term : terms) {
        for (const auto& part : parts) {
            if (part == term || part == term + "s") return true;
            if (term.size() >= 6 && part.find(term) != std::string::npos) return true;
        }
    }
    return false;
}

ValidationReport validate_bundle(const EnvironmentBundle& bundle, const ValidationOptions& options) {
    ValidationReport report;
    Collector c{report.violations};
    auto db = sqlite::Database::memory(0);
    db.exec("PRAGMA foreign_keys = ON");
    check_manifest(bundle, options, c);
    check_schema(bundle, options, db, c);
    check_seed(bundle, db, c);
    check_toolset(bundle, db, c);
    check_tasks(bundle, options, c);
    check_verifications(bundle, db, c);
    check_golden(bundle, c);
    return report;
}

}  // namespace awm
