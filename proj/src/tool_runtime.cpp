#include "awm/tool_runtime.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <map>
#include <optional>
#include <set>

#include "awm/errors.hpp"

namespace awm {

namespace {

struct StatementResult {
    std::vector<std::string> columns;
    std::vector<std::vector<Json>> rows;
    std::int64_t affected = 0;
    bool truncated = false;
};

struct RequirementFailed {
    std::string message;
};

Json typed_value(const Json& v, SemanticType type) {
    if (v.is_null()) return v;
    switch (type) {
        case SemanticType::Boolean:
            if (v.is_number()) return v.get<double>() != 0.0;
            return v;
        case SemanticType::Integer:
            if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())
                return static_cast<std::int64_t>(v.get<double>());
            return v;
        case SemanticType::Number:
        case SemanticType::Text:
            return v;
    }
    return v;
}

Json example_of(SemanticType type) {
    switch (type) {
        case SemanticType::Integer: return 1;
        case SemanticType::Number: return 1.5;
        case SemanticType::Text: return "text";
        case SemanticType::Boolean: return true;
    }
    return nullptr;
}

const char* schema_type(SemanticType type) {
    switch (type) {
        case SemanticType::Integer: return "integer";
        case SemanticType::Number: return "number";
        case SemanticType::Text: return "string";
        case SemanticType::Boolean: return "boolean";
    }
    return "string";
}

bool truthy(const Json& v) {
    if (v.is_null()) return false;
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number()) return v.get<double>() != 0.0;
    if (v.is_string()) return !v.get<std::string>().empty() && v.get<std::string>() != "0";
    return true;
}

bool is_user_fault(const sqlite::SqlError& e) {
    const int primary = e.code() & 0xff;
    return e.is_constraint() || primary == SQLITE_MISMATCH || primary == SQLITE_TOOBIG || primary == SQLITE_RANGE;
}

Json render_field(const ResponseField& field, const StatementResult& r) {
    auto column_index = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < r.columns.size(); ++i)
            if (r.columns[i] == name) return i;
        return std::nullopt;
    };
    auto row_object = [&](const std::vector<Json>& row) {
        Json obj = Json::object();
        if (field.columns.empty()) {
            for (std::size_t i = 0; i < r.columns.size(); ++i) obj[r.columns[i]] = row[i];
        } else {
            for (const auto& m : field.columns) {
                auto idx = column_index(m.column);
                obj[m.column] = idx ? typed_value(row[*idx], m.type) : Json(nullptr);
            }
        }
        return obj;
    };
    switch (field.shape) {
        case ResponseShape::Rows: {
            Json arr = Json::array();
            for (const auto& row : r.rows) arr.push_back(row_object(row));
            return arr;
        }
        case ResponseShape::Row:
            return r.rows.empty() ? Json(nullptr) : row_object(r.rows.front());
        case ResponseShape::Value: {
            if (r.rows.empty()) return nullptr;
            if (field.columns.empty()) return r.rows.front().empty() ? Json(nullptr) : r.rows.front().front();
            auto idx = column_index(field.columns.front().column);
            return idx ? typed_value(r.rows.front()[*idx], field.columns.front().type) : Json(nullptr);
        }
        case ResponseShape::Affected:
            return r.affected;
    }
    return nullptr;
}

Json example_field(const ResponseField& field) {
    Json obj = Json::object();
    for (const auto& m : field.columns) obj[m.column] = example_of(m.type);
    switch (field.shape) {
        case ResponseShape::Rows: return Json::array({obj});
        case ResponseShape::Row: return obj;
        case ResponseShape::Value: return field.columns.empty() ? Json(1) : example_of(field.columns.front().type);
        case ResponseShape::Affected: return 1;
    }
    return nullptr;
}

void drop_temp_objects(sqlite::Database& db) {
    std::vector<std::pair<std::string, std::string>> objects;
    {
        auto st = db.prepare("SELECT type, name FROM sqlite_temp_master WHERE type IN ('table', 'view')");
        while (st.step()) objects.emplace_back(st.column_text(0), st.column_text(1));
    }
    for (const auto& [type, name] : objects) {
        std::string quoted = "\"";
        for (char c : name) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
        quoted += "\"";
        db.exec("DROP " + std::string(type == "view" ? "VIEW" : "TABLE") + " IF EXISTS temp." + quoted);
    }
}

class DeadlineGuard {
public:
    DeadlineGuard(sqlite::Database& db, std::chrono::milliseconds timeout) : db_(db) {
        db_.set_deadline(std::chrono::steady_clock::now() + timeout);
    }
    ~DeadlineGuard() { db_.set_deadline(std::nullopt); }

private:
    sqlite::Database& db_;
};

}  // namespace

std::string to_string(ToolStatus status) {
    switch (status) {
        case ToolStatus::Ok: return "ok";
        case ToolStatus::UserError: return "user_error";
        case ToolStatus::ServerError: return "server_error";
    }
    return "ok";
}

ToolStatus tool_status_from(const std::string& name) {
    if (name == "ok") return ToolStatus::Ok;
    if (name == "user_error") return ToolStatus::UserError;
    if (name == "server_error") return ToolStatus::ServerError;
    throw Error("unknown tool status '" + name + "'");
}

ToolResult ToolResult::ok(Json payload, std::string message) {
    return {ToolStatus::Ok, std::move(payload), std::move(message)};
}
ToolResult ToolResult::user_error(std::string message) { return {ToolStatus::UserError, nullptr, std::move(message)}; }
ToolResult ToolResult::server_error(std::string message) {
    return {ToolStatus::ServerError, nullptr, std::move(message)};
}

Json ToolResult::to_json() const { return {{"status", to_string(status)}, {"payload", payload}, {"message", message}}; }

ToolResult ToolResult::from_json(const Json& j) {
    return {tool_status_from(j.at("status").get<std::string>()), j.value("payload", Json()), j.value("message", "")};
}

Json ToolDescriptor::to_json() const {
    Json ps = Json::array();
    for (const auto& p : params) {
        Json jp = {{"name", p.name},
                   {"type", awm::to_string(p.type)},
                   {"required", p.required},
                   {"nullable", p.nullable},
                   {"description", p.description}};
        if (!p.default_value.is_null()) jp["default"] = p.default_value;
        if (!p.example.is_null()) jp["example"] = p.example;
        ps.push_back(std::move(jp));
    }
    return {{"name", name},
            {"summary", summary},
            {"description", description},
            {"tags", tags},
            {"params", std::move(ps)},
            {"inputSchema", input_schema},
            {"response_example", response_example}};
}

ToolDescriptor describe_tool(const ToolDef& tool) {
    ToolDescriptor d;
    d.name = tool.name;
    d.summary = tool.summary;
    d.description = tool.description;
    d.tags = tool.tags;
    d.params = tool.params;
    Json props = Json::object();
    Json required = Json::array();
    for (const auto& p : tool.params) {
        Json prop = {{"description", p.description}};
        if (p.nullable) prop["type"] = Json::array({schema_type(p.type), "null"});
        else prop["type"] = schema_type(p.type);
        if (!p.default_value.is_null()) prop["default"] = p.default_value;
        props[p.name] = std::move(prop);
        if (p.required) required.push_back(p.name);
    }
    d.input_schema = {{"type", "object"}, {"properties", std::move(props)}, {"required", std::move(required)},
                      {"additionalProperties", false}};
    Json example = Json::object();
    for (const auto& f : tool.response) example[f.name] = example_field(f);
    d.response_example = std::move(example);
    return d;
}

std::vector<ToolDescriptor> list_tools(const EnvironmentBundle& bundle) {
    std::vector<ToolDescriptor> out;
    for (const auto& t : bundle.toolset) out.push_back(describe_tool(t));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

Json typecheck_arguments(const ToolDef& tool, const Json& arguments) {
    if (!arguments.is_null() && !arguments.is_object()) throw TypeMismatch("arguments", "a JSON object");
    const Json args = arguments.is_null() ? Json::object() : arguments;
    Json out = Json::object();
    for (const auto& p : tool.params) {
        auto it = args.find(p.name);
        if (it == args.end()) {
            if (p.required) throw MissingRequired(p.name);
            out[p.name] = p.default_value;
            continue;
        }
        const Json& v = *it;
        if (v.is_null()) {
            if (!p.nullable) throw TypeMismatch(p.name, "non-null " + awm::to_string(p.type));
            out[p.name] = nullptr;
            continue;
        }
        switch (p.type) {
            case SemanticType::Integer:
                if (v.is_number_integer()) {
                    out[p.name] = v;
                } else if (v.is_number_float()) {
                    const double d = v.get<double>();
                    if (!std::isfinite(d) || std::floor(d) != d || std::fabs(d) > 9007199254740992.0)
                        throw TypeMismatch(p.name, "an integer");
                    out[p.name] = static_cast<std::int64_t>(d);
                } else {
                    throw TypeMismatch(p.name, "an integer");
                }
                break;
            case SemanticType::Number:
                if (!v.is_number()) throw TypeMismatch(p.name, "a number");
                out[p.name] = v;
                break;
            case SemanticType::Text:
                if (!v.is_string()) throw TypeMismatch(p.name, "a string");
                out[p.name] = v;
                break;
            case SemanticType::Boolean:
                if (!v.is_boolean()) throw TypeMismatch(p.name, "a boolean");
                out[p.name] = v;
                break;
        }
    }
    for (const auto& [key, _] : args.items())
        if (!tool.find_param(key)) throw UnknownParam(key);
    return out;
}

std::string format_timestamp(std::int64_t unix_seconds) {
    const std::time_t t = static_cast<std::time_t>(unix_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%d %H:%M:%S", &tm);
    return buf;
}

ToolResult execute_tool(const EnvironmentBundle& bundle, StateHandle& handle, const ToolCall& call,
                        const RuntimeOptions& options) {
    const ToolDef* tool = bundle.find_tool(call.tool_name);
    if (!tool) return ToolResult::user_error("unknown tool: " + call.tool_name);

    Json bindings;
    try {
        bindings = typecheck_arguments(*tool, call.arguments);
    } catch (const ArgumentError& e) {
        return ToolResult::user_error(e.what());
    }
    const std::string now = format_timestamp(handle.clock_epoch());
    auto resolve = [&](const std::string& name) -> std::optional<Json> {
        if (auto it = bindings.find(name); it != bindings.end()) return *it;
        if (auto it = tool->constants.find(name); it != tool->constants.end()) return *it;
        if (name == kCurrentUserBinding) return Json(options.current_user);
        if (name == kNowBinding) return Json(now);
        return std::nullopt;
    };

    std::set<std::string> rendered;
    for (const auto& f : tool->response) rendered.insert(f.statement);

    std::lock_guard lock(handle.mutex());
    auto& db = handle.db();
    std::optional<std::string> digest_before;
    if (options.assert_readonly && !tool->mutating) digest_before = compute_digest(db);

    std::map<std::string, StatementResult> results;
    bool truncated = false;
    {
        DeadlineGuard deadline(db, options.timeout);
        bool open = false;
        try {
            db.exec("BEGIN IMMEDIATE");
            open = true;
            for (const auto& ps : tool->plan) {
                auto st = db.prepare(ps.sql);
                for (int i = 1; i <= st.parameter_count(); ++i) {
                    const auto raw = st.parameter_name(i);
                    const auto name = raw.empty() ? raw : raw.substr(1);
                    auto value = resolve(name);
                    if (!value) throw sqlite::SqlError(SQLITE_ERROR, "unresolved binding '" + raw + "'");
                    st.bind(i, *value);
                }
                StatementResult r;
                for (int c = 0; c < st.column_count(); ++c) r.columns.push_back(st.column_name(c));
                const bool keep = rendered.count(ps.id) > 0 || ps.require == Requirement::Truthy;
                std::size_t row_count = 0;
                while (st.step()) {
                    ++row_count;
                    if (keep && r.rows.size() < options.row_cap) {
                        std::vector<Json> row;
                        for (int c = 0; c < st.column_count(); ++c) row.push_back(st.column_json(c));
                        r.rows.push_back(std::move(row));
                    } else if (keep) {
                        r.truncated = true;
                    }
                }
                if (st.column_count() == 0 || !st.readonly()) r.affected = db.changes();
                truncated = truncated || r.truncated;

                if (ps.require == Requirement::NonEmpty) {
                    const bool ok = st.column_count() > 0 ? row_count > 0 : r.affected > 0;
                    if (!ok) throw RequirementFailed{ps.error.empty() ? "requirement failed: " + ps.id : ps.error};
                } else if (ps.require == Requirement::Truthy) {
                    const bool ok = !r.rows.empty() && !r.rows.front().empty() && truthy(r.rows.front().front());
                    if (!ok) throw RequirementFailed{ps.error.empty() ? "requirement failed: " + ps.id : ps.error};
                }
                results[ps.id] = std::move(r);
            }
            drop_temp_objects(db);
            db.exec("COMMIT");
            open = false;
        } catch (const RequirementFailed& f) {
            if (open) db.exec("ROLLBACK");
            drop_temp_objects(db);
            return ToolResult::user_error(f.message);
        } catch (const sqlite::SqlError& e) {
            db.set_deadline(std::nullopt);
            if (open) {
                try {
                    db.exec("ROLLBACK");
                } catch (const sqlite::SqlError&) {
                }
            }
            try {
                drop_temp_objects(db);
            } catch (const sqlite::SqlError&) {
            }
            if (e.is_interrupt()) return ToolResult::server_error("timeout: tool call exceeded its time budget");
            if (is_user_fault(e)) return ToolResult::user_error(e.what());
            return ToolResult::server_error(std::string("internal failure: ") + e.what());
        }
    }

    if (digest_before && compute_digest(db) != *digest_before)
        return ToolResult::server_error("internal failure: read-only tool '" + tool->name + "' changed state");

    Json payload = Json::object();
    for (const auto& f : tool->response) payload[f.name] = render_field(f, results[f.statement]);
    return ToolResult::ok(std::move(payload),
                          truncated ? "rows truncated to " + std::to_string(options.row_cap) : std::string());
}

}  // namespace awm
