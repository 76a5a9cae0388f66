#include <httplib.h>

#include <thread>

#include "awm/errors.hpp"
#include "awm/mcp_gateway.hpp"

namespace awm {

struct HttpEndpoint::Impl {
    httplib::Server server;
    std::string host;
    int port = 0;
    std::thread thread;
    std::mutex mutex;
    std::condition_variable stopped_cv;
    bool stopped = false;
};

HttpEndpoint::HttpEndpoint(McpServer& server, const std::string& host, int port) : impl_(std::make_unique<Impl>()) {
    impl_->host = host;
    auto& srv = impl_->server;
    srv.new_task_queue = [] { return new httplib::ThreadPool(2); };
    srv.Post("/mcp", [&server](const httplib::Request& req, httplib::Response& res) {
        const auto reply = server.handle_text(req.body);
        if (reply.empty()) {
            res.status = 202;
            return;
        }
        res.set_content(reply, "application/json");
    });
    srv.Get("/health", [&server](const httplib::Request&, httplib::Response& res) {
        const auto h = server.health();
        if (h.value("status", "") != "ok") res.status = 503;
        res.set_content(canonical_dump(h), "application/json");
    });
    // httplib defaults to SO_REUSEPORT, which would let a second endpoint share the port.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    if (port == 0) {
        impl_->port = srv.bind_to_any_port(host);
        if (impl_->port <= 0) throw PortInUse(0);
    } else {
        if (!srv.bind_to_port(host, port)) throw PortInUse(port);
        impl_->port = port;
    }
    impl_->thread = std::thread([impl = impl_.get()] {
        impl->server.listen_after_bind();
        std::lock_guard lock(impl->mutex);
        impl->stopped = true;
        impl->stopped_cv.notify_all();
    });
    impl_->server.wait_until_ready();
}

HttpEndpoint::~HttpEndpoint() {
    stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpEndpoint::port() const { return impl_->port; }
const std::string& HttpEndpoint::host() const { return impl_->host; }

void HttpEndpoint::wait() {
    std::unique_lock lock(impl_->mutex);
    impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

void HttpEndpoint::stop() { impl_->server.stop(); }

namespace {

httplib::Client make_client(const std::string& host, int port, std::chrono::milliseconds timeout) {
    httplib::Client cli(host, port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    return cli;
}

Json parse_reply(const httplib::Result& res, const std::string& where) {
    if (!res) throw InstanceUnavailable(where + ": " + httplib::to_string(res.error()));
    if (res->body.empty()) return nullptr;
    try {
        return Json::parse(res->body);
    } catch (const Json::exception& e) {
        throw InstanceUnavailable(where + ": reply is not JSON");
    }
}

}  // namespace

Json http_post_json(const std::string& host, int port, const std::string& path, const Json& body,
                    std::chrono::milliseconds timeout) {
    auto cli = make_client(host, port, timeout);
    return parse_reply(cli.Post(path, canonical_dump(body), "application/json"),
                       host + ":" + std::to_string(port) + path);
}

Json http_get_json(const std::string& host, int port, const std::string& path, std::chrono::milliseconds timeout) {
    auto cli = make_client(host, port, timeout);
    return parse_reply(cli.Get(path), host + ":" + std::to_string(port) + path);
}

}  // namespace awm
