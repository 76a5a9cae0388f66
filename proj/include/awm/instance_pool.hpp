#pragma once

// Pools of isolated environment instances: each instance owns its own
// database file, initial snapshot and MCP endpoint.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "awm/bundle.hpp"
#include "awm/mcp_gateway.hpp"
#include "awm/state_store.hpp"
#include "awm/tool_runtime.hpp"

namespace awm {

using BundlePtr = std::shared_ptr<const EnvironmentBundle>;

enum class Transport { InProcess, Stdio, Http };

struct InstanceConfig {
    BundlePtr bundle;
    std::string instance_id;
    Transport transport = Transport::InProcess;
    std::string host = "127.0.0.1";
    int port = 0;  // 0: any free port
    std::int64_t current_user = 1;
    std::filesystem::path state_root = std::filesystem::temp_directory_path() / "awm-state";
    std::int64_t clock_epoch = kDefaultClockEpoch;
    std::chrono::milliseconds timeout{2000};
};

class Instance {
public:
    Instance(const InstanceConfig& config, StateHandle handle);
    ~Instance();
    Instance(const Instance&) = delete;
    Instance& operator=(const Instance&) = delete;

    const std::string& id() const { return config_.instance_id; }
    const EnvironmentBundle& bundle() const { return *config_.bundle; }
    const BundlePtr& bundle_ptr() const { return config_.bundle; }
    StateHandle& handle() { return handle_; }
    const Snapshot& initial() const { return initial_; }
    McpServer& server() { return *server_; }
    std::optional<int> port() const;
    const std::string& host() const { return config_.host; }

    /// JSON-RPC round trip through the configured transport.
    Json rpc(const Json& request);
    void reset();
    void kill() { server_->kill(); }
    bool probe() { return server_->probe(); }
    void start_http();

private:
    InstanceConfig config_;
    StateHandle handle_;
    Snapshot initial_;
    std::unique_ptr<McpServer> server_;
    std::unique_ptr<HttpEndpoint> http_;
};

/// Provisions, snapshots the initial state and, for HTTP, starts listening.
/// Throws ProvisionFailed, PortInUse.
std::shared_ptr<Instance> serve(const InstanceConfig& config);

struct PoolOptions {
    std::filesystem::path root = std::filesystem::temp_directory_path() / "awm-pool";
    std::int64_t clock_epoch = kDefaultClockEpoch;
    RuntimeOptions runtime;
    Transport transport = Transport::InProcess;
    std::string host = "127.0.0.1";
    int base_port = 0;  // contiguous range from here when non-zero
    int failures_to_replace = 3;
};

struct PoolCounters {
    std::size_t spawned = 0;
    std::size_t live = 0;
    std::size_t prefetched = 0;
    std::size_t recycled = 0;
    std::size_t failed = 0;
    bool conserved() const { return spawned == live + prefetched + recycled + failed; }
    Json to_json() const;
};

struct PoolMetrics {
    double cold_provision_ms = 0;  // last synchronous batch spawn
    double prefetch_ms = 0;        // last background batch, wall time
    double swap_in_ms = 0;         // last swap of a prefetched batch into service
    std::size_t cold_batch = 0;
    std::size_t swap_batch = 0;
    Json to_json() const;
};

struct BatchSpec {
    std::vector<BundlePtr> bundles;  // round-robin
    std::size_t n = 0;
};

class InstancePool {
public:
    InstancePool(std::size_t capacity, PoolOptions options = {});
    ~InstancePool();
    InstancePool(const InstancePool&) = delete;
    InstancePool& operator=(const InstancePool&) = delete;

    std::size_t capacity() const { return capacity_; }

    /// Synchronously brings n instances live, round-robin over bundles.
    /// Throws CapacityError, ProvisionFailed.
    void spawn(const BatchSpec& batch);

    /// Provisions the next batch in the background.
    /// Throws CapacityError when live + prefetched + n would exceed capacity.
    void prefetch_next(const BatchSpec& batch);
    void wait_prefetch();
    /// Retires every live instance and puts the prefetched batch into service.
    std::vector<std::shared_ptr<Instance>> swap_in();
    /// Recycles the prefetched batch without using it.
    void cancel_prefetch();

    std::vector<std::shared_ptr<Instance>> live() const;
    std::shared_ptr<Instance> instance(const std::string& id) const;

    /// Exclusive use of g idle live instances. Throws CapacityError.
    std::vector<std::shared_ptr<Instance>> acquire(std::size_t g);
    /// Resets the instance to its initial snapshot and marks it idle.
    void release(const std::shared_ptr<Instance>& instance);

    void reset_instance(const std::string& id);
    /// Tears the instance down and counts it as recycled.
    void recycle(const std::string& id);

    /// Probes every live instance; those failing `failures_to_replace`
    /// consecutive probes are torn down and replaced. Returns replaced ids.
    std::vector<std::string> health_check();

    PoolCounters counters() const;
    PoolMetrics metrics() const;

private:
    std::shared_ptr<Instance> make_instance(const BundlePtr& bundle);
    const Snapshot& template_for(const BundlePtr& bundle);
    int allocate_port();

    std::size_t capacity_;
    PoolOptions options_;
    mutable std::mutex mutex_;
    std::mutex template_mutex_;
    std::map<std::string, std::pair<StateHandle, Snapshot>> templates_;  // keyed by bundle digest
    std::map<std::string, std::shared_ptr<Instance>> live_;
    std::map<std::string, bool> busy_;
    std::map<std::string, int> probe_failures_;
    std::vector<std::shared_ptr<Instance>> prefetched_;
    std::size_t prefetch_pending_ = 0;
    std::thread prefetch_thread_;
    std::exception_ptr prefetch_error_;
    PoolCounters counters_;
    PoolMetrics metrics_;
    std::size_t next_seq_ = 0;
    std::vector<int> free_ports_;
    int next_port_ = 0;
};

/// Pool with capacity n and n live instances. Throws CapacityError for n = 0.
std::unique_ptr<InstancePool> spawn_pool(const std::vector<BundlePtr>& bundles, std::size_t n,
                                         PoolOptions options = {});

}  // namespace awm
