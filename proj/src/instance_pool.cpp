#include "awm/instance_pool.hpp"

#include <algorithm>
#include <atomic>

#include <unistd.h>

#include "awm/errors.hpp"

namespace awm {

namespace fs = std::filesystem;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

RuntimeOptions runtime_of(const InstanceConfig& c) {
    RuntimeOptions o;
    o.current_user = c.current_user;
    o.timeout = c.timeout;
    return o;
}

void remove_snapshot_files(const Snapshot& s) {
    std::error_code ec;
    fs::remove(s.path, ec);
    auto side = s.path;
    side.replace_extension(".json");
    fs::remove(side, ec);
}

}  // namespace

// Instance

Instance::Instance(const InstanceConfig& config, StateHandle handle)
    : config_(config), handle_(std::move(handle)) {
    initial_ = snapshot(handle_);
    server_ = std::make_unique<McpServer>(config_.bundle, handle_, runtime_of(config_));
    if (config_.transport == Transport::Http) start_http();
}

Instance::~Instance() {
    http_.reset();
    server_.reset();
    handle_.discard();
    remove_snapshot_files(initial_);
}

void Instance::start_http() {
    if (!http_) http_ = std::make_unique<HttpEndpoint>(*server_, config_.host, config_.port);
}

std::optional<int> Instance::port() const {
    if (http_) return http_->port();
    return std::nullopt;
}

Json Instance::rpc(const Json& request) {
    switch (config_.transport) {
        case Transport::InProcess: return server_->handle(request);
        case Transport::Stdio: {
            const auto reply = server_->handle_text(canonical_dump(request));
            return reply.empty() ? Json() : Json::parse(reply);
        }
        case Transport::Http: return http_post_json(config_.host, http_->port(), "/mcp", request);
    }
    return nullptr;
}

void Instance::reset() { awm::reset(handle_, initial_); }

std::shared_ptr<Instance> serve(const InstanceConfig& config) {
    if (!config.bundle) throw ProvisionFailed("no bundle given");
    ProvisionOptions po;
    po.root = config.state_root;
    po.clock_epoch = config.clock_epoch;
    try {
        auto p = provision(*config.bundle, config.instance_id, po);
        return std::make_shared<Instance>(config, std::move(p.handle));
    } catch (const ThresholdExceeded& e) {
        throw ProvisionFailed(config.instance_id + ": " + e.what());
    } catch (const IoError& e) {
        throw ProvisionFailed(config.instance_id + ": " + e.what());
    }
}

// Counters

Json PoolCounters::to_json() const {
    return {{"spawned", spawned}, {"live", live}, {"prefetched", prefetched}, {"recycled", recycled}, {"failed", failed}};
}

Json PoolMetrics::to_json() const {
    return {{"cold_provision_ms", cold_provision_ms}, {"prefetch_ms", prefetch_ms}, {"swap_in_ms", swap_in_ms},
            {"cold_batch", cold_batch}, {"swap_batch", swap_batch}};
}

// InstancePool

InstancePool::InstancePool(std::size_t capacity, PoolOptions options)
    : capacity_(capacity), options_(std::move(options)), next_port_(options_.base_port) {
    if (capacity_ == 0) throw CapacityError("pool capacity must be at least 1");
    static std::atomic<std::uint64_t> pool_seq{0};
    options_.root /= "pool-" + std::to_string(::getpid()) + "-" + std::to_string(++pool_seq);
    fs::create_directories(options_.root);
}

InstancePool::~InstancePool() {
    if (prefetch_thread_.joinable()) prefetch_thread_.join();
    std::lock_guard lock(mutex_);
    live_.clear();
    prefetched_.clear();
    std::lock_guard tlock(template_mutex_);
    for (auto& [_, t] : templates_) {
        t.first.discard();
        remove_snapshot_files(t.second);
    }
    std::error_code ec;
    fs::remove_all(options_.root, ec);
}

const Snapshot& InstancePool::template_for(const BundlePtr& bundle) {
    std::lock_guard lock(template_mutex_);
    const auto key = bundle_digest(*bundle);
    if (auto it = templates_.find(key); it != templates_.end()) return it->second.second;
    ProvisionOptions po;
    po.root = options_.root / "templates";
    po.clock_epoch = options_.clock_epoch;
    auto p = provision(*bundle, key.substr(0, 16), po);
    auto snap = snapshot(p.handle);
    auto [it, _] = templates_.emplace(key, std::make_pair(std::move(p.handle), std::move(snap)));
    return it->second.second;
}

int InstancePool::allocate_port() {
    if (options_.base_port == 0) return 0;
    std::lock_guard lock(mutex_);
    if (!free_ports_.empty()) {
        const int p = free_ports_.back();
        free_ports_.pop_back();
        return p;
    }
    return next_port_++;
}

std::shared_ptr<Instance> InstancePool::make_instance(const BundlePtr& bundle) {
    std::string id;
    {
        std::lock_guard lock(mutex_);
        id = bundle->manifest.scenario.name + "-" + std::to_string(next_seq_++);
    }
    InstanceConfig cfg;
    cfg.bundle = bundle;
    cfg.instance_id = id;
    cfg.transport = options_.transport;
    cfg.host = options_.host;
    cfg.port = options_.transport == Transport::Http ? allocate_port() : 0;
    cfg.current_user = options_.runtime.current_user;
    cfg.timeout = options_.runtime.timeout;
    cfg.state_root = options_.root / "instances";
    cfg.clock_epoch = options_.clock_epoch;
    try {
        const auto& tpl = template_for(bundle);
        return std::make_shared<Instance>(cfg, clone_instance(tpl, id, cfg.state_root, cfg.clock_epoch));
    } catch (const ThresholdExceeded& e) {
        throw ProvisionFailed(id + ": " + e.what());
    } catch (const IoError& e) {
        throw ProvisionFailed(id + ": " + e.what());
    }
}

void InstancePool::spawn(const BatchSpec& batch) {
    if (batch.n == 0 || batch.bundles.empty()) throw CapacityError("spawn needs n >= 1 and at least one bundle");
    {
        std::lock_guard lock(mutex_);
        if (live_.size() + prefetched_.size() + prefetch_pending_ + batch.n > capacity_)
            throw CapacityError("spawning " + std::to_string(batch.n) + " exceeds capacity " + std::to_string(capacity_));
    }
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < batch.n; ++k) {
        auto inst = make_instance(batch.bundles[k % batch.bundles.size()]);
        std::lock_guard lock(mutex_);
        ++counters_.spawned;
        busy_[inst->id()] = false;
        live_.emplace(inst->id(), std::move(inst));
    }
    std::lock_guard lock(mutex_);
    metrics_.cold_provision_ms = elapsed_ms(start);
    metrics_.cold_batch = batch.n;
}

void InstancePool::prefetch_next(const BatchSpec& batch) {
    if (batch.n == 0 || batch.bundles.empty()) throw CapacityError("prefetch needs n >= 1 and at least one bundle");
    if (prefetch_thread_.joinable()) prefetch_thread_.join();
    {
        std::lock_guard lock(mutex_);
        if (live_.size() + prefetched_.size() + batch.n > capacity_)
            throw CapacityError("prefetching " + std::to_string(batch.n) + " exceeds capacity " +
                                std::to_string(capacity_));
        prefetch_pending_ = batch.n;
        prefetch_error_ = nullptr;
    }
    prefetch_thread_ = std::thread([this, batch] {
        const auto start = std::chrono::steady_clock::now();
        try {
            for (std::size_t k = 0; k < batch.n; ++k) {
                auto inst = make_instance(batch.bundles[k % batch.bundles.size()]);
                std::lock_guard lock(mutex_);
                ++counters_.spawned;
                --prefetch_pending_;
                prefetched_.push_back(std::move(inst));
            }
        } catch (...) {
            std::lock_guard lock(mutex_);
            prefetch_error_ = std::current_exception();
            prefetch_pending_ = 0;
        }
        std::lock_guard lock(mutex_);
        metrics_.prefetch_ms = elapsed_ms(start);
    });
}

void InstancePool::wait_prefetch() {
    if (prefetch_thread_.joinable()) prefetch_thread_.join();
    std::lock_guard lock(mutex_);
    if (prefetch_error_) {
        auto e = prefetch_error_;
        prefetch_error_ = nullptr;
        std::rethrow_exception(e);
    }
}

std::vector<std::shared_ptr<Instance>> InstancePool::swap_in() {
    wait_prefetch();
    std::vector<std::shared_ptr<Instance>> retired;
    std::vector<std::shared_ptr<Instance>> now_live;
    {
        std::lock_guard lock(mutex_);
        for (auto& [id, inst] : live_) {
            retired.push_back(inst);
            ++counters_.recycled;
        }
        live_.clear();
        busy_.clear();
        probe_failures_.clear();
        // timed section: the prefetched batch becoming usable
        const auto start = std::chrono::steady_clock::now();
        for (auto& inst : prefetched_) {
            busy_[inst->id()] = false;
            now_live.push_back(inst);
            live_.emplace(inst->id(), std::move(inst));
        }
        prefetched_.clear();
        metrics_.swap_in_ms = elapsed_ms(start);
        metrics_.swap_batch = now_live.size();
    }
    for (auto& inst : retired) {
        if (auto p = inst->port(); p && options_.base_port) {
            std::lock_guard lock(mutex_);
            free_ports_.push_back(*p);
        }
    }
    retired.clear();
    return now_live;
}

void InstancePool::cancel_prefetch() {
    if (prefetch_thread_.joinable()) prefetch_thread_.join();
    std::vector<std::shared_ptr<Instance>> dropped;
    std::lock_guard lock(mutex_);
    prefetch_error_ = nullptr;
    counters_.recycled += prefetched_.size();
    dropped.swap(prefetched_);
}

std::vector<std::shared_ptr<Instance>> InstancePool::live() const {
    std::lock_guard lock(mutex_);
    std::vector<std::shared_ptr<Instance>> out;
    for (const auto& [_, inst] : live_) out.push_back(inst);
    return out;
}

std::shared_ptr<Instance> InstancePool::instance(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = live_.find(id);
    if (it == live_.end()) throw InstanceUnavailable("no live instance '" + id + "'");
    return it->second;
}

std::vector<std::shared_ptr<Instance>> InstancePool::acquire(std::size_t g) {
    std::lock_guard lock(mutex_);
    std::vector<std::shared_ptr<Instance>> out;
    for (auto& [id, inst] : live_) {
        if (out.size() == g) break;
        if (!busy_[id]) out.push_back(inst);
    }
    if (g == 0 || out.size() < g)
        throw CapacityError("requested " + std::to_string(g) + " instances, " + std::to_string(out.size()) + " idle");
    for (auto& inst : out) busy_[inst->id()] = true;
    return out;
}

void InstancePool::release(const std::shared_ptr<Instance>& instance) {
    {
        std::lock_guard lock(mutex_);
        if (!live_.count(instance->id())) return;
    }
    instance->reset();
    std::lock_guard lock(mutex_);
    busy_[instance->id()] = false;
}

void InstancePool::reset_instance(const std::string& id) { instance(id)->reset(); }

void InstancePool::recycle(const std::string& id) {
    std::shared_ptr<Instance> inst;
    std::lock_guard lock(mutex_);
    auto it = live_.find(id);
    if (it == live_.end()) throw InstanceUnavailable("no live instance '" + id + "'");
    inst = std::move(it->second);
    live_.erase(it);
    busy_.erase(id);
    probe_failures_.erase(id);
    ++counters_.recycled;
    inst->kill();
}

std::vector<std::string> InstancePool::health_check() {
    std::vector<std::string> replaced;
    for (const auto& inst : live()) {
        const bool ok = inst->probe();
        BundlePtr bundle;
        {
            std::lock_guard lock(mutex_);
            if (ok) {
                probe_failures_[inst->id()] = 0;
                continue;
            }
            if (++probe_failures_[inst->id()] < options_.failures_to_replace) continue;
            live_.erase(inst->id());
            busy_.erase(inst->id());
            probe_failures_.erase(inst->id());
            ++counters_.failed;
            bundle = inst->bundle_ptr();
        }
        inst->kill();
        replaced.push_back(inst->id());
        auto fresh = make_instance(bundle);
        std::lock_guard lock(mutex_);
        ++counters_.spawned;
        busy_[fresh->id()] = false;
        live_.emplace(fresh->id(), std::move(fresh));
    }
    return replaced;
}

PoolCounters InstancePool::counters() const {
    std::lock_guard lock(mutex_);
    auto c = counters_;
    c.live = live_.size();
    c.prefetched = prefetched_.size();
    return c;
}

PoolMetrics InstancePool::metrics() const {
    std::lock_guard lock(mutex_);
    return metrics_;
}

std::unique_ptr<InstancePool> spawn_pool(const std::vector<BundlePtr>& bundles, std::size_t n, PoolOptions options) {
    if (n == 0) throw CapacityError("pool size must be at least 1");
    auto pool = std::make_unique<InstancePool>(n, std::move(options));
    pool->spawn({bundles, n});
    return pool;
}

}  // namespace awm
