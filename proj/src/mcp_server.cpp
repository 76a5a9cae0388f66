#include <istream>
#include <ostream>

#include "awm/errors.hpp"
#include "awm/mcp_gateway.hpp"

namespace awm {

namespace rpc {

Json request(const Json& id, const std::string& method, Json params) {
    return {{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", std::move(params)}};
}

Json error_response(const Json& id, int code, const std::string& message, Json data) {
    Json err = {{"code", code}, {"message", message}};
    if (!data.is_null()) err["data"] = std::move(data);
    return {{"jsonrpc", "2.0"}, {"id", id}, {"error", std::move(err)}};
}

bool is_server_error_code(int code) { return code == kInternalError || (code <= -32001 && code >= -32099); }

}  // namespace rpc

namespace {

Json result_response(const Json& id, Json result) {
    return {{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
}

bool valid_id(const Json& id) { return id.is_null() || id.is_string() || id.is_number_integer(); }

}  // namespace

Json tool_result_to_rpc(const Json& id, const ToolResult& result) {
    switch (result.status) {
        case ToolStatus::Ok:
            return result_response(
                id, {{"content", Json::array({{{"type", "text"}, {"text", canonical_dump(result.payload)}}})},
                     {"isError", false}});
        case ToolStatus::UserError:
            return result_response(
                id, {{"content", Json::array({{{"type", "text"}, {"text", result.message}}})}, {"isError", true}});
        case ToolStatus::ServerError: {
            const bool timeout = result.message.rfind("timeout", 0) == 0;
            return rpc::error_response(id, timeout ? rpc::kTimeout : rpc::kRuntimeFault, result.message,
                                       {{"status", "server_error"}});
        }
    }
    return rpc::error_response(id, rpc::kInternalError, "unreachable");
}

ToolResult tool_result_from_rpc(const Json& response) {
    if (!response.is_object()) return ToolResult::server_error("malformed response");
    if (auto err = response.find("error"); err != response.end()) {
        const int code = err->value("code", rpc::kInternalError);
        const std::string message = err->value("message", "");
        if (rpc::is_server_error_code(code)) return ToolResult::server_error(message);
        return ToolResult::user_error(message);
    }
    const auto& result = response.value("result", Json::object());
    std::string text;
    if (auto content = result.find("content"); content != result.end() && content->is_array() && !content->empty())
        text = content->at(0).value("text", "");
    if (result.value("isError", false)) return ToolResult::user_error(text);
    try {
        return ToolResult::ok(Json::parse(text));
    } catch (const Json::exception&) {
        return ToolResult::server_error("tool result is not JSON");
    }
}

McpServer::McpServer(std::shared_ptr<const EnvironmentBundle> bundle, StateHandle& handle, RuntimeOptions options)
    : bundle_(std::move(bundle)), handle_(handle), options_(options) {}

const std::string& McpServer::instance_id() const { return handle_.instance_id(); }

Json McpServer::health() {
    if (!available_) return {{"instance_id", instance_id()}, {"status", "unavailable"}};
    return {{"instance_id", instance_id()}, {"digest", current_digest(handle_)}, {"status", "ok"}};
}

bool McpServer::probe() {
    if (!available_) return false;
    std::lock_guard lock(handle_.mutex());
    return integrity_ok(handle_.db());
}

std::string McpServer::handle_text(const std::string& body) {
    Json message;
    try {
        message = Json::parse(body);
    } catch (const Json::exception& e) {
        return canonical_dump(rpc::error_response(nullptr, rpc::kParseError, std::string("parse error: ") + e.what()));
    }
    const auto response = handle(message);
    return response.is_null() ? std::string() : canonical_dump(response);
}

Json McpServer::handle(const Json& message) {
    if (message.is_array()) {
        if (message.empty()) return rpc::error_response(nullptr, rpc::kInvalidRequest, "empty batch");
        Json out = Json::array();
        for (const auto& m : message)
            if (auto r = handle_one(m); !r.is_null()) out.push_back(std::move(r));
        return out.empty() ? Json() : out;
    }
    return handle_one(message);
}

Json McpServer::handle_one(const Json& message) {
    if (!message.is_object() || message.value("jsonrpc", "") != "2.0" || !message.contains("method") ||
        !message["method"].is_string())
        return rpc::error_response(message.is_object() ? message.value("id", Json()) : Json(), rpc::kInvalidRequest,
                                   "invalid request");
    const bool notification = !message.contains("id");
    const Json id = message.value("id", Json());
    if (!valid_id(id)) return rpc::error_response(nullptr, rpc::kInvalidRequest, "invalid id");
    const std::string method = message["method"];
    const Json params = message.value("params", Json::object());

    if (notification) return nullptr;  // notifications/initialized and friends need no reply
    if (!available_) return rpc::error_response(id, rpc::kInstanceUnavailable, "instance unavailable");
    if (!params.is_object()) return rpc::error_response(id, rpc::kInvalidParams, "params must be an object");

    try {
        if (method == "initialize") {
            return result_response(id, {{"protocolVersion", params.value("protocolVersion", rpc::kProtocolVersion)},
                                        {"capabilities", {{"tools", {{"listChanged", false}}}}},
                                        {"serverInfo", {{"name", "awm-gateway"}, {"version", "0.1.0"}}},
                                        {"instance_id", instance_id()}});
        }
        if (method == "ping") return result_response(id, Json::object());
        if (method == "tools/list") {
            Json tools = Json::array();
            for (const auto& d : list_tools(*bundle_)) tools.push_back(d.to_json());
            return result_response(id, {{"tools", std::move(tools)}});
        }
        if (method == "tools/call") return call_tool(id, params);
        return rpc::error_response(id, rpc::kMethodNotFound, "method not found: " + method);
    } catch (const std::exception& e) {
        return rpc::error_response(id, rpc::kInternalError, std::string("internal error: ") + e.what());
    }
}

Json McpServer::call_tool(const Json& id, const Json& params) {
    if (!params.contains("name") || !params["name"].is_string())
        return rpc::error_response(id, rpc::kInvalidParams, "tools/call requires a string 'name'");
    const std::string name = params["name"];
    Json arguments = params.value("arguments", Json::object());
    if (arguments.is_null()) arguments = Json::object();
    if (!bundle_->find_tool(name)) return rpc::error_response(id, rpc::kInvalidParams, "unknown tool: " + name);
    const auto result = execute_tool(*bundle_, handle_, {name, std::move(arguments)}, options_);
    if (!available_) return rpc::error_response(id, rpc::kInstanceUnavailable, "instance unavailable");
    return tool_result_to_rpc(id, result);
}

void serve_stdio(McpServer& server, std::istream& in, std::ostream& out) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto reply = server.handle_text(line);
        if (!reply.empty()) out << reply << '\n' << std::flush;
    }
}

}  // namespace awm
