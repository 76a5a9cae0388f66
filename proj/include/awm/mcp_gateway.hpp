#pragma once

// JSON-RPC 2.0 endpoint speaking the MCP tool methods for one instance.
//
// Error mapping
//   -32700 parse error          body is not JSON
//   -32600 invalid request      not a JSON-RPC 2.0 request object
//   -32601 method not found
//   -32602 invalid params       malformed params or unknown tool name
//   -32603 internal error
//   -32001 timeout              tool call exceeded its time budget
//   -32002 runtime fault        database or I/O failure while executing
//   -32003 instance unavailable instance killed or being replaced
// Tool-level user errors (bad arguments, failed preconditions, constraint
// violations) are results with isError=true and the message as text.
// Codes -32001..-32003 and -32603 are server errors for trajectory rule 6.

#include <atomic>
#include <chrono>
#include <iosfwd>
#include <memory>
#include <string>

#include "awm/bundle.hpp"
#include "awm/json_util.hpp"
#include "awm/state_store.hpp"
#include "awm/tool_runtime.hpp"

namespace awm {

namespace rpc {
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kInternalError = -32603;
inline constexpr int kTimeout = -32001;
inline constexpr int kRuntimeFault = -32002;
inline constexpr int kInstanceUnavailable = -32003;

inline constexpr const char* kProtocolVersion = "2025-03-26";

Json request(const Json& id, const std::string& method, Json params = Json::object());
Json error_response(const Json& id, int code, const std::string& message, Json data = nullptr);
bool is_server_error_code(int code);
}  // namespace rpc

class McpServer {
public:
    McpServer(std::shared_ptr<const EnvironmentBundle> bundle, StateHandle& handle, RuntimeOptions options = {});

    /// Response object, or null for notifications. Arrays are batches.
    Json handle(const Json& message);
    /// Same over raw text; returns an empty string when nothing is due.
    std::string handle_text(const std::string& body);

    /// {instance_id, digest, status}
    Json health();
    /// Integrity check plus availability; what pool health probes call.
    bool probe();

    /// Fault injection: every later request fails with -32003.
    void kill() { available_ = false; }
    bool available() const { return available_; }

    const EnvironmentBundle& bundle() const { return *bundle_; }
    const std::string& instance_id() const;

private:
    Json handle_one(const Json& message);
    Json call_tool(const Json& id, const Json& params);

    std::shared_ptr<const EnvironmentBundle> bundle_;
    StateHandle& handle_;
    RuntimeOptions options_;
    std::atomic<bool> available_{true};
};

/// Client-side reading of a tools/call response.
ToolResult tool_result_from_rpc(const Json& response);

/// The tools/call result body for a ToolResult; used by the server and by
/// tests comparing wire payloads with direct execution.
Json tool_result_to_rpc(const Json& id, const ToolResult& result);

// Transports

/// HTTP: POST /mcp with a JSON-RPC body, GET /health.
class HttpEndpoint {
public:
    /// Port 0 picks a free port. Throws PortInUse when binding fails.
    HttpEndpoint(McpServer& server, const std::string& host, int port);
    ~HttpEndpoint();
    HttpEndpoint(const HttpEndpoint&) = delete;
    HttpEndpoint& operator=(const HttpEndpoint&) = delete;

    int port() const;
    const std::string& host() const;
    /// Blocks until stop() is called from another thread.
    void wait();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Throws InstanceUnavailable when the endpoint cannot be reached.
Json http_post_json(const std::string& host, int port, const std::string& path, const Json& body,
                    std::chrono::milliseconds timeout = std::chrono::seconds(10));
Json http_get_json(const std::string& host, int port, const std::string& path,
                   std::chrono::milliseconds timeout = std::chrono::seconds(10));

/// Newline-delimited JSON-RPC over a stream pair until EOF.
void serve_stdio(McpServer& server, std::istream& in, std::ostream& out);

}  // namespace awm
