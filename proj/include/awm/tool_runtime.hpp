#pragma once

// Executes ToolDef plans against a live instance and renders observations.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "awm/bundle.hpp"
#include "awm/json_util.hpp"
#include "awm/state_store.hpp"

namespace awm {

struct ToolCall {
    std::string tool_name;
    Json arguments = Json::object();
};

enum class ToolStatus { Ok, UserError, ServerError };

std::string to_string(ToolStatus status);
ToolStatus tool_status_from(const std::string& name);

struct ToolResult {
    ToolStatus status = ToolStatus::Ok;
    Json payload;
    std::string message;

    static ToolResult ok(Json payload, std::string message = {});
    static ToolResult user_error(std::string message);
    static ToolResult server_error(std::string message);

    bool is_ok() const { return status == ToolStatus::Ok; }
    Json to_json() const;
    static ToolResult from_json(const Json& j);
};

struct ToolDescriptor {
    std::string name;
    std::string summary;
    std::string description;
    std::vector<std::string> tags;
    std::vector<ParamSpec> params;
    Json input_schema;      // JSON Schema object
    Json response_example;

    Json to_json() const;
};

/// Name-sorted.
std::vector<ToolDescriptor> list_tools(const EnvironmentBundle& bundle);
ToolDescriptor describe_tool(const ToolDef& tool);

/// Normalized bindings: every declared param appears, absent optionals carry
/// their default or null. Integral floats become integers; nothing else is
/// coerced. Throws TypeMismatch, MissingRequired, UnknownParam.
Json typecheck_arguments(const ToolDef& tool, const Json& arguments);

struct RuntimeOptions {
    std::int64_t current_user = 1;
    std::chrono::milliseconds timeout{2000};
    std::size_t row_cap = 500;
    /// Recompute the digest around read-only tools and fail loudly on change.
    bool assert_readonly = false;
};

/// UTC "YYYY-MM-DD HH:MM:SS", the form bound to :now.
std::string format_timestamp(std::int64_t unix_seconds);

/// Runs the plan in one transaction. Unknown tools, bad arguments, failed
/// requirements and constraint violations roll back and return user_error.
ToolResult execute_tool(const EnvironmentBundle& bundle, StateHandle& handle, const ToolCall& call,
                        const RuntimeOptions& options = {});

}  // namespace awm
