#include "awm/verification.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "awm/errors.hpp"
#include "awm/mcp_gateway.hpp"
#include "awm/sqlite.hpp"

namespace awm {

namespace {

bool infrastructure_code(int code) {
    switch (code & 0xff) {
        case 5:   // BUSY
        case 10:  // IOERR
        case 11:  // CORRUPT
        case 13:  // FULL
        case 14:  // CANTOPEN
        case 26:  // NOTADB
            return true;
        default: return false;
    }
}

struct ProbeRows {
    ProbeOutcome outcome;
    std::vector<std::string> columns;
};

ProbeRows run_probe(sqlite::Database* db, const std::string& open_error, const Probe& probe) {
    ProbeRows r;
    r.outcome.target = probe.target;
    if (!db) {
        r.outcome.ok = false;
        r.outcome.infrastructure = true;
        r.outcome.error = open_error;
        return r;
    }
    try {
        auto stmt = db->prepare(probe.query);
        if (!stmt.readonly()) throw Error("probe is not read-only");
        std::vector<std::string> names;
        for (int i = 0; i < stmt.column_count(); ++i) names.push_back(stmt.column_name(i));
        std::vector<int> keep;
        if (probe.projection.empty()) {
            for (int i = 0; i < static_cast<int>(names.size()); ++i) keep.push_back(i);
        } else {
            for (const auto& col : probe.projection) {
                const auto it = std::find(names.begin(), names.end(), col);
                if (it == names.end()) throw Error("projection column '" + col + "' not produced by the query");
                keep.push_back(static_cast<int>(it - names.begin()));
            }
        }
        for (int i : keep) r.columns.push_back(names[i]);
        while (stmt.step()) {
            Json row = Json::object();
            for (int i : keep) row[names[i]] = stmt.column_json(i);
            r.outcome.rows.push_back(std::move(row));
        }
    } catch (const sqlite::SqlError& e) {
        r.outcome.ok = false;
        r.outcome.rows = Json::array();
        r.outcome.error = e.what();
        r.outcome.infrastructure = infrastructure_code(e.code());
    } catch (const Error& e) {
        r.outcome.ok = false;
        r.outcome.rows = Json::array();
        r.outcome.error = e.what();
    }
    return r;
}

Json scalar_of(const ProbeRows& p) {
    if (p.outcome.rows.empty() || p.columns.empty()) return nullptr;
    return p.outcome.rows[0][p.columns[0]];
}

std::string row_key(const Json& row, const std::vector<std::string>& key) {
    if (key.empty()) return canonical_dump(row);
    Json k = Json::array();
    for (const auto& c : key) k.push_back(row.contains(c) ? row[c] : Json());
    return canonical_dump(k);
}

bool truthy(const Json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_array()) return !v.empty();
    if (v.is_number()) return v.get<double>() != 0.0;
    if (v.is_string()) return !v.get<std::string>().empty();
    return false;
}

std::string normalize(const std::string& s) {
    std::string out;
    for (unsigned char c : s)
        if (c != ' ' && c != '_' && c != '-') out += static_cast<char>(std::tolower(c));
    return out;
}

}  // namespace

bool expectation_holds(const std::optional<Expectation>& expect, const Json& value) {
    if (!expect) return truthy(value);
    const auto& op = expect->op;
    const auto& want = expect->value;
    if (op == "eq") return value == want;
    if (op == "ne") return value != want;
    if (op == "ge" || op == "le") {
        if (!value.is_number() || !want.is_number()) return false;
        const double a = value.get<double>(), b = want.get<double>();
        return op == "ge" ? a >= b : a <= b;
    }
    if (op == "nonempty") return truthy(value);
    if (op == "empty") return !truthy(value);
    if (op == "count") return value.is_array() && want.is_number_integer() && value.size() == want.get<std::size_t>();
    return false;
}

bool SignalReport::infrastructure_failure() const {
    return std::any_of(probes.begin(), probes.end(), [](const auto& p) { return p.second.infrastructure; });
}

bool SignalReport::all_required_satisfied() const {
    return std::all_of(signals.begin(), signals.end(),
                       [](const auto& s) { return !s.second.required || s.second.satisfied; });
}

std::vector<std::string> SignalReport::violated_guards() const {
    std::vector<std::string> out;
    for (const auto& [name, s] : signals)
        if (s.guard && s.evaluated && !s.satisfied) out.push_back(name);
    return out;
}

Json SignalReport::to_json() const {
    Json p = Json::object();
    for (const auto& [name, o] : probes) {
        Json j{{"status", o.ok ? "ok" : "error"},
               {"rows", o.rows},
               {"target", o.target == ProbeTarget::Initial ? "initial" : "final"}};
        if (!o.ok) {
            j["error"] = o.error;
            j["infrastructure"] = o.infrastructure;
        }
        p[name] = std::move(j);
    }
    Json s = Json::object();
    for (const auto& [name, o] : signals)
        s[name] = {{"value", o.value},
                   {"evaluated", o.evaluated},
                   {"satisfied", o.satisfied},
                   {"required", o.required},
                   {"guard", o.guard}};
    return {{"probes", p}, {"signals", s}};
}

SignalReport run_verification(const VerificationSpec& spec, const std::filesystem::path& initial_db,
                              const std::filesystem::path& final_db) {
    struct Source {
        std::optional<sqlite::Database> db;
        std::string error;
    };
    auto open = [](const std::filesystem::path& path) {
        Source s;
        std::error_code ec;
        if (!std::filesystem::is_regular_file(path, ec)) {
            s.error = "snapshot not readable: " + path.string();
            return s;
        }
        try {
            s.db.emplace(path, sqlite::Database::Mode::ReadOnly);
            s.db->exec("PRAGMA query_only = ON");
        } catch (const Error& e) {
            s.db.reset();
            s.error = e.what();
        }
        return s;
    };
    Source initial = open(initial_db);
    Source final = open(final_db);

    SignalReport report;
    std::map<std::string, ProbeRows> rows;
    for (const auto& probe : spec.probes) {
        auto& src = probe.target == ProbeTarget::Initial ? initial : final;
        auto r = run_probe(src.db ? &*src.db : nullptr, src.error, probe);
        report.probes[probe.name] = r.outcome;
        rows.emplace(probe.name, std::move(r));
    }

    for (const auto& sig : spec.signals) {
        SignalOutcome out;
        out.required = sig.required;
        out.guard = sig.guard;
        const auto left = rows.find(sig.left);
        const auto right = sig.right.empty() ? rows.end() : rows.find(sig.right);
        const bool needs_right = sig.rule == SignalRule::SetDifference || sig.rule == SignalRule::CountDelta;
        const bool usable = left != rows.end() && left->second.outcome.ok &&
                            (sig.right.empty() ? !needs_right : right != rows.end() && right->second.outcome.ok);
        if (!usable) {
            out.evaluated = false;
            out.value = nullptr;
            report.signals[sig.name] = out;
            continue;
        }
        const auto& l = left->second;
        switch (sig.rule) {
            case SignalRule::SetDifference: {
                std::set<std::string> seen;
                for (const auto& row : right->second.outcome.rows) seen.insert(row_key(row, sig.key));
                Json diff = Json::array();
                for (const auto& row : l.outcome.rows)
                    if (!seen.count(row_key(row, sig.key))) diff.push_back(row);
                out.value = std::move(diff);
                break;
            }
            case SignalRule::CountDelta:
                out.value = static_cast<std::int64_t>(l.outcome.rows.size()) -
                            static_cast<std::int64_t>(right->second.outcome.rows.size());
                break;
            case SignalRule::Exists: out.value = !l.outcome.rows.empty(); break;
            case SignalRule::ScalarEquals: {
                const Json want = sig.right.empty() ? sig.value : scalar_of(right->second);
                const Json got = scalar_of(l);
                out.value = !got.is_null() && got == want;
                break;
            }
        }
        out.satisfied = expectation_holds(sig.expect, out.value);
        report.signals[sig.name] = out;
    }
    return report;
}

SignalReport run_verification(const VerificationSpec& spec, const Snapshot& initial, const Snapshot& final) {
    return run_verification(spec, initial.path, final.path);
}

std::string to_string(Category c) {
    switch (c) {
        case Category::Completed: return "Completed";
        case Category::PartiallyCompleted: return "PartiallyCompleted";
        case Category::AgentError: return "AgentError";
        case Category::EnvironmentError: return "EnvironmentError";
    }
    return "PartiallyCompleted";
}

Category category_from(const std::string& name) {
    const auto n = normalize(name);
    for (auto c : {Category::Completed, Category::PartiallyCompleted, Category::AgentError, Category::EnvironmentError})
        if (normalize(to_string(c)) == n) return c;
    if (n == "partially" || n == "partial") return Category::PartiallyCompleted;
    throw ParseError("classification", "/classification", "unknown category '" + name + "'");
}

Json Classification::to_json() const {
    Json j{{"classification", to_string(category)}, {"evidence", evidence}};
    if (!reasoning.empty()) j["reasoning"] = reasoning;
    if (!confidence_score.is_null()) j["confidence_score"] = confidence_score;
    return j;
}

Classification RuleJudge::classify(const JudgeInput& in) {
    Classification c;
    const auto& report = *in.report;
    const auto& term = in.termination;

    std::vector<std::string> unmet;
    for (const auto& [name, s] : report.signals)
        if (s.required && !s.satisfied) unmet.push_back(name);

    if (term.kind == TerminationKind::Answered && unmet.empty()) {
        c.category = Category::Completed;
        c.evidence.push_back("answered at step " + std::to_string(term.step));
        for (const auto& [name, s] : report.signals)
            if (s.required) c.evidence.push_back("required signal holds: " + name);
        return c;
    }
    if (term.kind == TerminationKind::EnvironmentError || report.infrastructure_failure()) {
        c.category = Category::EnvironmentError;
        if (term.kind == TerminationKind::EnvironmentError)
            c.evidence.push_back("environment error at step " + std::to_string(term.step));
        for (const auto& [name, p] : report.probes)
            if (p.infrastructure) c.evidence.push_back("probe " + name + " failed: " + p.error);
        return c;
    }
    const auto guards = report.violated_guards();
    if (term.kind == TerminationKind::FormatError || !guards.empty()) {
        c.category = Category::AgentError;
        if (term.kind == TerminationKind::FormatError)
            c.evidence.push_back("format error at step " + std::to_string(term.step));
        for (const auto& g : guards) c.evidence.push_back("guard violated: " + g);
        return c;
    }
    c.category = Category::PartiallyCompleted;
    c.evidence.push_back("termination " + to_string(term.kind));
    for (const auto& u : unmet) c.evidence.push_back("required signal unmet: " + u);
    return c;
}

HttpJudge::HttpJudge(std::string host, int port, std::string path)
    : host_(std::move(host)), port_(port), path_(std::move(path)) {}

Json HttpJudge::request_body(const JudgeInput& in) {
    Json task = Json::object();
    if (in.task) task = to_json(*in.task);
    Json trajectory{{"termination", in.termination.to_json()}, {"steps", Json::array()}};
    if (in.trajectory) {
        trajectory["task_id"] = in.trajectory->task_id;
        for (const auto& s : in.trajectory->steps) trajectory["steps"].push_back(to_json(s));
    }
    return {{"task", task},
            {"trajectory", trajectory},
            {"verification_report", in.report ? in.report->to_json() : Json::object()},
            {"success_criteria", in.success_criteria},
            {"failure_criteria", in.failure_criteria}};
}

Classification HttpJudge::parse_response(const Json& body) {
    if (!body.is_object() || !body.contains("classification") || !body["classification"].is_string())
        throw JudgeBackendUnavailable("judge response lacks a classification");
    Classification c;
    try {
        c.category = category_from(body["classification"].get<std::string>());
    } catch (const ParseError& e) {
        throw JudgeBackendUnavailable(e.what());
    }
    if (body.contains("reasoning") && body["reasoning"].is_string()) c.reasoning = body["reasoning"].get<std::string>();
    if (body.contains("confidence_score")) c.confidence_score = body["confidence_score"];
    if (body.contains("evidence")) {
        const auto& e = body["evidence"];
        if (e.is_array()) {
            for (const auto& item : e) c.evidence.push_back(item.is_string() ? item.get<std::string>() : canonical_dump(item));
        } else if (e.is_string()) {
            c.evidence.push_back(e.get<std::string>());
        }
    }
    return c;
}

Classification HttpJudge::classify(const JudgeInput& in) {
    Json body;
    try {
        body = http_post_json(host_, port_, path_, request_body(in));
    } catch (const Error& e) {
        throw JudgeBackendUnavailable(std::string("judge backend: ") + e.what());
    }
    return parse_response(body);
}

Classification judge(const JudgeInput& input) {
    RuleJudge j;
    return j.classify(input);
}

}  // namespace awm
