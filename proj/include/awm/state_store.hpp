#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "awm/bundle.hpp"
#include "awm/json_util.hpp"
#include "awm/sqlite.hpp"

namespace awm {

/// 2025-01-01T00:00:00Z. Every 'now' inside a provisioned database resolves here.
inline constexpr std::int64_t kDefaultClockEpoch = 1735689600;

struct ProvisionOptions {
    std::filesystem::path root = std::filesystem::temp_directory_path() / "awm-state";
    std::int64_t clock_epoch = kDefaultClockEpoch;
    double ddl_threshold = 0.10;     // accepted when failed <= threshold * total
    double insert_threshold = 0.10;
};

struct ProvisionReport {
    std::size_t ddl_total = 0;
    std::size_t ddl_failed = 0;
    std::size_t inserts_total = 0;
    std::size_t inserts_applied = 0;
    std::size_t inserts_failed = 0;
    std::vector<std::string> warnings;
    Json to_json() const;
};

/// A live database instance. One exclusive writer: callers that mutate or
/// snapshot hold `mutex()` for the duration.
class StateHandle {
public:
    StateHandle(std::string instance_id, std::filesystem::path db_path, std::int64_t clock_epoch);
    StateHandle(StateHandle&&) noexcept;
    StateHandle& operator=(StateHandle&&) noexcept;
    ~StateHandle();

    const std::string& instance_id() const;
    const std::filesystem::path& db_path() const;
    std::int64_t clock_epoch() const;
    /// Identifies this handle's history; snapshots carry it so reset can
    /// refuse foreign snapshots.
    const std::string& lineage() const;

    sqlite::Database& db();
    std::mutex& mutex();

    /// Closes the connection and deletes the database file.
    void discard();

private:
    friend struct SnapshotAccess;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct Snapshot {
    std::string snapshot_id;
    std::string digest;
    std::string lineage;
    std::string instance_id;
    std::filesystem::path path;

    Json to_json() const;
    static Snapshot from_json(const Json& j);
};

struct Provisioned {
    StateHandle handle;
    ProvisionReport report;
};

/// Fresh database from the bundle: DDL, then seed inserts in foreign-key
/// dependency order. Throws ThresholdExceeded when either failure fraction
/// is above its threshold.
Provisioned provision(const EnvironmentBundle& bundle, const std::string& instance_id,
                      const ProvisionOptions& options = {});

/// New instance whose database starts as a byte copy of `source`.
StateHandle clone_instance(const Snapshot& source, const std::string& instance_id,
                           const std::filesystem::path& root, std::int64_t clock_epoch = kDefaultClockEpoch);

/// Copies the database to `dir` (default: <db dir>/snapshots) with a JSON sidecar.
Snapshot snapshot(StateHandle& handle, const std::optional<std::filesystem::path>& dir = std::nullopt);

/// Reads the sidecar next to `db_file` when present; the digest is always recomputed.
Snapshot load_snapshot(const std::filesystem::path& db_file);

/// Throws LineageMismatch for snapshots taken from another handle.
void reset(StateHandle& handle, const Snapshot& target);

/// Hash over tables sorted by name, rows sorted by canonical encoding.
std::string compute_digest(sqlite::Database& db);
std::string compute_digest(const std::filesystem::path& db_file);
/// Digest of the live handle, taken under its writer lock.
std::string current_digest(StateHandle& handle);

/// Canonical per-table dump: {table: [row objects sorted by encoding]}.
Json dump_tables(const std::filesystem::path& db_file);

bool integrity_ok(sqlite::Database& db);

struct ColumnChange {
    std::string column;
    Json before;
    Json after;
    bool operator==(const ColumnChange&) const = default;
};

struct ModifiedRow {
    Json key;  // object of primary-key columns
    std::vector<ColumnChange> changes;
    bool operator==(const ModifiedRow&) const = default;
};

/// Keyed by primary key when the table declares one; otherwise rows are
/// compared as a multiset and `modified` stays empty.
struct TableDiff {
    std::vector<std::string> key_columns;
    std::vector<Json> added;
    std::vector<Json> removed;
    std::vector<ModifiedRow> modified;
    bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
    bool operator==(const TableDiff&) const = default;
};

struct StateDiff {
    std::map<std::string, TableDiff> tables;  // only tables with changes
    bool empty() const { return tables.empty(); }
    Json to_json() const;
    bool operator==(const StateDiff&) const = default;
};

/// Throws SchemaMismatch when the two databases do not share tables and columns.
StateDiff diff(const Snapshot& initial, const Snapshot& final);
StateDiff diff_databases(const std::filesystem::path& initial, const std::filesystem::path& final);

/// Applies removals, modifications, then additions in one transaction.
void apply_diff(const std::filesystem::path& db_file, const StateDiff& changes);

}  // namespace awm
