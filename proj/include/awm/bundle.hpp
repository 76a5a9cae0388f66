#pragma once

// Declarative environment bundle: scenario, schema, seed data, toolset,
// tasks and verification specs. Everything here is immutable after load.
//
// On-disk layout (one directory per environment):
//   manifest.json          scenario + format version "awm-bundle/1"
//   schema.sql             CREATE TABLE statements, each followed by its indexes
//   seed.sql               INSERT statements grouped under `-- @table <name>`
//                          and `-- @rationale <text>` directives
//   toolset.json           array of tool definitions
//   tasks.json             array of tasks
//   verify/<task_id>.json  one verification spec per task
//   golden.json            optional scripted solutions, keyed by task id

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "awm/json_util.hpp"

namespace awm {

inline constexpr const char* kBundleFormat = "awm-bundle/1";

enum class SemanticType { Integer, Number, Text, Boolean };

std::string to_string(SemanticType type);
SemanticType semantic_type_from(const std::string& name);

struct Scenario {
    std::string name;
    std::string url_hint;
    std::string description;
    std::string category;
    bool operator==(const Scenario&) const = default;
};

struct Manifest {
    Scenario scenario;
    std::string format_version = kBundleFormat;
    bool operator==(const Manifest&) const = default;
};

struct TaskSpec {
    std::string id;
    std::string instruction;
    std::string verification_ref;
    bool operator==(const TaskSpec&) const = default;
};

struct TableSpec {
    std::string name;
    std::string ddl;
    std::vector<std::string> indexes;  // also holds triggers attached to the table
    bool operator==(const TableSpec&) const = default;
};

struct SchemaSpec {
    std::vector<TableSpec> tables;
    std::size_t statement_count() const;
    bool operator==(const SchemaSpec&) const = default;
};

struct SeedTable {
    std::string table;
    std::string rationale;
    std::vector<std::string> statements;
    bool operator==(const SeedTable&) const = default;
};

struct SeedSpec {
    std::vector<SeedTable> tables;
    std::size_t statement_count() const;
    bool operator==(const SeedSpec&) const = default;
};

struct ParamSpec {
    std::string name;
    SemanticType type = SemanticType::Text;
    bool required = false;
    bool nullable = false;
    Json default_value;  // null when absent
    std::string description;
    Json example;        // null when absent
    bool operator==(const ParamSpec&) const = default;
};

/// Post-condition attached to a plan statement. A failed requirement turns
/// the call into a user error and rolls the transaction back.
enum class Requirement {
    None,
    NonEmpty,  // a query yields at least one row / a write touches at least one row
    Truthy,    // first column of the first row is non-zero and non-null
};

struct PlanStatement {
    std::string id;
    std::string sql;
    Requirement require = Requirement::None;
    std::string error;  // message when the requirement fails
    bool operator==(const PlanStatement&) const = default;
};

enum class ResponseShape {
    Rows,      // array of objects
    Row,       // single object, null when no row
    Value,     // single scalar from `column`
    Affected,  // number of rows changed by the statement
};

struct ColumnMapping {
    std::string column;
    SemanticType type = SemanticType::Text;
    bool operator==(const ColumnMapping&) const = default;
};

struct ResponseField {
    std::string name;
    std::string statement;
    ResponseShape shape = ResponseShape::Rows;
    std::vector<ColumnMapping> columns;  // Rows / Row; a single entry for Value
    bool operator==(const ResponseField&) const = default;
};

struct ToolDef {
    std::string name;
    std::string summary;
    std::string description;
    std::vector<std::string> tags;
    std::vector<ParamSpec> params;
    Json constants = Json::object();
    std::vector<PlanStatement> plan;
    std::vector<ResponseField> response;
    bool mutating = false;

    const ParamSpec* find_param(const std::string& param) const;
    bool operator==(const ToolDef&) const = default;
};

enum class ProbeTarget { Initial, Final };

struct Probe {
    std::string name;
    ProbeTarget target = ProbeTarget::Final;
    std::string query;
    std::vector<std::string> projection;  // empty keeps every column
    bool operator==(const Probe&) const = default;
};

enum class SignalRule { SetDifference, CountDelta, Exists, ScalarEquals };

std::string to_string(SignalRule rule);

/// Condition a derived signal must meet to count as satisfied.
/// One of: eq, ne, ge, le (against `value`), nonempty, empty, count (== value).
struct Expectation {
    std::string op;
    Json value;
    bool operator==(const Expectation&) const = default;
};

struct DerivedSignal {
    std::string name;
    SignalRule rule = SignalRule::Exists;
    std::string left;
    std::string right;               // SetDifference / CountDelta, optional for ScalarEquals
    std::vector<std::string> key;    // SetDifference key columns; empty means whole row
    Json value;                      // ScalarEquals constant when `right` is empty
    std::optional<Expectation> expect;
    bool required = false;           // must hold for Completed
    bool guard = false;              // violation means the agent touched the wrong entity
    bool operator==(const DerivedSignal&) const = default;
};

struct VerificationSpec {
    std::string id;
    std::vector<Probe> probes;
    std::vector<DerivedSignal> signals;
    std::string success_criteria;
    std::string failure_criteria;

    const Probe* find_probe(const std::string& probe) const;
    bool operator==(const VerificationSpec&) const = default;
};

struct ScriptedCall {
    std::string tool;
    Json arguments = Json::object();
    bool operator==(const ScriptedCall&) const = default;
};

/// Known-good solution authored with a template bundle.
struct GoldenScript {
    std::vector<ScriptedCall> calls;
    std::string answer;
    bool operator==(const GoldenScript&) const = default;
};

struct EnvironmentBundle {
    Manifest manifest;
    SchemaSpec schema;
    SeedSpec seed;
    std::vector<ToolDef> toolset;
    std::vector<TaskSpec> tasks;
    std::map<std::string, VerificationSpec> verifications;
    std::map<std::string, GoldenScript> golden;

    const ToolDef* find_tool(const std::string& name) const;
    const TaskSpec* find_task(const std::string& id) const;
    const VerificationSpec* verification_for(const TaskSpec& task) const;
    bool operator==(const EnvironmentBundle&) const = default;
};

// Serialization. Each *_text function produces the canonical file content.

Json to_json(const ToolDef& tool);
ToolDef tool_from_json(const Json& j);
Json to_json(const VerificationSpec& spec);
VerificationSpec verification_from_json(const Json& j);
Json to_json(const TaskSpec& task);
TaskSpec task_from_json(const Json& j);
Json to_json(const Scenario& scenario);
Scenario scenario_from_json(const Json& j);

std::string schema_text(const SchemaSpec& schema);
SchemaSpec parse_schema(const std::string& text);
std::string seed_text(const SeedSpec& seed);
SeedSpec parse_seed(const std::string& text);

/// Throws MissingFile, ParseError or CrossRefError.
EnvironmentBundle load_bundle(const std::filesystem::path& dir);
/// Throws IoError.
void save_bundle(const EnvironmentBundle& bundle, const std::filesystem::path& dir);

/// Stable digest of the canonical serialization.
std::string bundle_digest(const EnvironmentBundle& bundle);

// Validation

enum class Severity { Warning, Error };

struct Violation {
    std::string code;      // e.g. "AuthFieldForbidden"
    Severity severity = Severity::Error;
    std::string location;  // "toolset/borrow_book/plan/0"
    std::string message;
    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool empty() const { return violations.empty(); }
    bool has_errors() const;
    bool has(const std::string& code) const;
    Json to_json() const;
};

struct ValidationOptions {
    std::set<std::string> categories = default_categories();
    std::vector<std::string> auth_column_terms = {"password", "token", "session", "salt"};
    std::vector<std::string> auth_task_phrases = default_auth_phrases();

    static std::set<std::string> default_categories();
    static std::vector<std::string> default_auth_phrases();
    /// Replaces the category registry with one name per non-empty line.
    void load_categories(const std::filesystem::path& file);
};

/// True when an instruction lexically mentions authentication.
bool mentions_authentication(const std::string& instruction, const std::vector<std::string>& phrases);
/// True when a column name contains a deny-listed term as one of its
/// underscore-separated parts (password_hash, api_token).
bool is_auth_column(const std::string& column, const std::vector<std::string>& terms);

ValidationReport validate_bundle(const EnvironmentBundle& bundle, const ValidationOptions& options = {});

/// Implicit plan bindings available without a declared parameter.
inline constexpr const char* kCurrentUserBinding = "current_user_id";
inline constexpr const char* kNowBinding = "now";

}  // namespace awm
