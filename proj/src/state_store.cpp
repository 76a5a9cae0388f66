#include "awm/state_store.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>

#include "awm/errors.hpp"
#include "awm/sql_text.hpp"

namespace awm {

namespace fs = std::filesystem;

namespace {

std::atomic<std::uint64_t> g_lineage_counter{0};

std::string new_lineage(const std::string& instance_id) {
    return instance_id + "#" + std::to_string(++g_lineage_counter);
}

void configure_writer(sqlite::Database& db) {
    // Rollback still works with an in-memory journal; durability across
    // crashes is not needed for disposable environment state.
    db.exec("PRAGMA journal_mode = MEMORY");
    db.exec("PRAGMA synchronous = OFF");
    db.exec("PRAGMA foreign_keys = ON");
}

std::string encode_value(const sqlite::Statement& st, int col) {
    switch (st.column_type(col)) {
        case sqlite::ColumnType::Null: return "n";
        case sqlite::ColumnType::Integer: return "i" + std::to_string(st.column_int64(col));
        case sqlite::ColumnType::Real: {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", st.column_double(col));
            return std::string("r") + buf;
        }
        case sqlite::ColumnType::Text: {
            auto t = st.column_text(col);
            return "t" + std::to_string(t.size()) + ":" + t;
        }
        case sqlite::ColumnType::Blob: {
            auto b = st.column_blob(col);
            return "b" + std::to_string(b.size()) + ":" + b;
        }
    }
    return "n";
}

struct TableInfo {
    std::string name;
    std::string sql;
    std::vector<std::string> columns;
    std::vector<std::string> pk;  // ordered by pk position
};

std::vector<TableInfo> list_tables(sqlite::Database& db, bool include_internal) {
    std::vector<TableInfo> out;
    auto st = db.prepare(
        "SELECT name, COALESCE(sql, '') FROM sqlite_master WHERE type = 'table' "
        "AND (name NOT LIKE 'sqlite\\_%' ESCAPE '\\' OR (?1 AND name = 'sqlite_sequence')) ORDER BY name");
    st.bind(1, include_internal);
    while (st.step()) out.push_back({st.column_text(0), st.column_text(1), {}, {}});
    for (auto& t : out) {
        auto info = db.prepare("SELECT name, pk FROM pragma_table_info(?1) ORDER BY cid");
        info.bind(1, t.name);
        std::vector<std::pair<std::int64_t, std::string>> pk;
        while (info.step()) {
            t.columns.push_back(info.column_text(0));
            if (auto pos = info.column_int64(1); pos > 0) pk.emplace_back(pos, info.column_text(0));
        }
        std::sort(pk.begin(), pk.end());
        for (auto& [_, name] : pk) t.pk.push_back(name);
    }
    return out;
}

std::string quote_ident(const std::string& name) {
    std::string out = "\"";
    for (char c : name) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

struct RowSet {
    std::vector<std::string> encodings;
    std::vector<Json> rows;
};

RowSet read_rows(sqlite::Database& db, const TableInfo& t) {
    RowSet rs;
    auto st = db.prepare("SELECT * FROM " + quote_ident(t.name));
    const int n = st.column_count();
    while (st.step()) {
        std::string enc;
        Json row = Json::object();
        for (int c = 0; c < n; ++c) {
            if (c) enc.push_back('\x1f');
            enc += encode_value(st, c);
            row[st.column_name(c)] = st.column_json(c);
        }
        rs.encodings.push_back(std::move(enc));
        rs.rows.push_back(std::move(row));
    }
    return rs;
}

void order_by_encoding(RowSet& rs) {
    std::vector<std::size_t> idx(rs.rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rs.encodings[a] < rs.encodings[b]; });
    RowSet sorted;
    for (auto i : idx) {
        sorted.encodings.push_back(std::move(rs.encodings[i]));
        sorted.rows.push_back(std::move(rs.rows[i]));
    }
    rs = std::move(sorted);
}

fs::path sidecar_of(const fs::path& db_file) {
    auto p = db_file;
    p.replace_extension(".json");
    return p;
}

// Orders seed sections so parents are inserted before children; stable
// with respect to declared order, cycles broken by declared order.
std::vector<const SeedTable*> dependency_order(const SeedSpec& seed, sqlite::Database& db) {
    std::map<std::string, std::vector<std::string>> parents;
    std::map<std::string, std::size_t> remaining_sections;
    for (const auto& s : seed.tables) {
        const auto key = sql::to_lower(s.table);
        ++remaining_sections[key];
        if (parents.count(key)) continue;
        auto& ps = parents[key];
        try {
            auto st = db.prepare("SELECT DISTINCT \"table\" FROM pragma_foreign_key_list(?1)");
            st.bind(1, s.table);
            while (st.step()) {
                auto p = sql::to_lower(st.column_text(0));
                if (p != key) ps.push_back(p);
            }
        } catch (const sqlite::SqlError&) {
        }
    }
    std::vector<const SeedTable*> order;
    std::vector<bool> placed(seed.tables.size(), false);
    while (order.size() < seed.tables.size()) {
        std::optional<std::size_t> pick;
        for (std::size_t i = 0; i < seed.tables.size() && !pick; ++i) {
            if (placed[i]) continue;
            const auto& ps = parents[sql::to_lower(seed.tables[i].table)];
            const bool ready = std::all_of(ps.begin(), ps.end(), [&](const std::string& p) {
                auto it = remaining_sections.find(p);
                return it == remaining_sections.end() || it->second == 0;
            });
            if (ready) pick = i;
        }
        if (!pick) {
            for (std::size_t i = 0; i < seed.tables.size(); ++i)
                if (!placed[i]) {
                    pick = i;
                    break;
                }
        }
        placed[*pick] = true;
        --remaining_sections[sql::to_lower(seed.tables[*pick].table)];
        order.push_back(&seed.tables[*pick]);
    }
    return order;
}

bool within(std::size_t failed, std::size_t total, double threshold) {
    return static_cast<double>(failed) <= threshold * static_cast<double>(total) + 1e-9;
}

}  // namespace

// StateHandle

struct StateHandle::Impl {
    std::string instance_id;
    fs::path db_path;
    std::int64_t clock_epoch;
    std::string lineage;
    sqlite::Database db;
    std::mutex mutex;
    std::uint64_t snapshot_seq = 0;
};

StateHandle::StateHandle(std::string instance_id, fs::path db_path, std::int64_t clock_epoch)
    : impl_(std::make_unique<Impl>()) {
    impl_->lineage = new_lineage(instance_id);
    impl_->instance_id = std::move(instance_id);
    impl_->db_path = std::move(db_path);
    impl_->clock_epoch = clock_epoch;
    impl_->db = sqlite::Database(impl_->db_path, sqlite::Database::Mode::Create, clock_epoch);
    configure_writer(impl_->db);
}

StateHandle::StateHandle(StateHandle&&) noexcept = default;
StateHandle& StateHandle::operator=(StateHandle&&) noexcept = default;
StateHandle::~StateHandle() = default;

const std::string& StateHandle::instance_id() const { return impl_->instance_id; }
const fs::path& StateHandle::db_path() const { return impl_->db_path; }
std::int64_t StateHandle::clock_epoch() const { return impl_->clock_epoch; }
const std::string& StateHandle::lineage() const { return impl_->lineage; }
sqlite::Database& StateHandle::db() { return impl_->db; }
std::mutex& StateHandle::mutex() { return impl_->mutex; }

void StateHandle::discard() {
    std::lock_guard lock(impl_->mutex);
    impl_->db = sqlite::Database();
    std::error_code ec;
    fs::remove(impl_->db_path, ec);
}

struct SnapshotAccess {
    static std::uint64_t next(StateHandle& h) { return ++h.impl_->snapshot_seq; }
};

// ProvisionReport / Snapshot

Json ProvisionReport::to_json() const {
    return {{"ddl_total", ddl_total},
            {"ddl_failed", ddl_failed},
            {"inserts_total", inserts_total},
            {"applied", inserts_applied},
            {"inserts_failed", inserts_failed},
            {"warnings", warnings}};
}

Json Snapshot::to_json() const {
    return {{"snapshot_id", snapshot_id},
            {"digest", digest},
            {"lineage", lineage},
            {"instance_id", instance_id},
            {"path", path.string()}};
}

Snapshot Snapshot::from_json(const Json& j) {
    Snapshot s;
    s.snapshot_id = j.value("snapshot_id", "");
    s.digest = j.value("digest", "");
    s.lineage = j.value("lineage", "");
    s.instance_id = j.value("instance_id", "");
    s.path = j.value("path", "");
    return s;
}

// Operations

Provisioned provision(const EnvironmentBundle& bundle, const std::string& instance_id, const ProvisionOptions& options) {
    std::error_code ec;
    fs::create_directories(options.root, ec);
    if (ec) throw IoError("cannot create " + options.root.string() + ": " + ec.message());
    const auto path = options.root / (instance_id + ".db");
    fs::remove(path, ec);

    StateHandle handle(instance_id, path, options.clock_epoch);
    ProvisionReport report;
    auto& db = handle.db();

    for (const auto& table : bundle.schema.tables) {
        std::vector<const std::string*> stmts{&table.ddl};
        for (const auto& idx : table.indexes) stmts.push_back(&idx);
        for (const auto* s : stmts) {
            ++report.ddl_total;
            try {
                db.exec(*s);
            } catch (const sqlite::SqlError& e) {
                ++report.ddl_failed;
                report.warnings.push_back("schema/" + table.name + ": " + e.what());
            }
        }
    }
    if (!within(report.ddl_failed, report.ddl_total, options.ddl_threshold)) {
        handle.discard();
        throw ThresholdExceeded("ddl", report.ddl_failed, report.ddl_total);
    }

    for (const auto* section : dependency_order(bundle.seed, db)) {
        for (std::size_t k = 0; k < section->statements.size(); ++k) {
            ++report.inserts_total;
            try {
                db.exec(section->statements[k]);
                ++report.inserts_applied;
            } catch (const sqlite::SqlError& e) {
                ++report.inserts_failed;
                report.warnings.push_back("seed/" + section->table + "/" + std::to_string(k) + ": " + e.what());
            }
        }
    }
    if (!within(report.inserts_failed, report.inserts_total, options.insert_threshold)) {
        handle.discard();
        throw ThresholdExceeded("insert", report.inserts_failed, report.inserts_total);
    }
    if (!integrity_ok(db)) {
        handle.discard();
        throw IoError("provisioned database failed its integrity check");
    }
    return {std::move(handle), std::move(report)};
}

StateHandle clone_instance(const Snapshot& source, const std::string& instance_id, const fs::path& root,
                           std::int64_t clock_epoch) {
    std::error_code ec;
    fs::create_directories(root, ec);
    const auto path = root / (instance_id + ".db");
    fs::copy_file(source.path, path, fs::copy_options::overwrite_existing, ec);
    if (ec) throw IoError("cannot copy " + source.path.string() + ": " + ec.message());
    return StateHandle(instance_id, path, clock_epoch);
}

Snapshot snapshot(StateHandle& handle, const std::optional<fs::path>& dir) {
    std::lock_guard lock(handle.mutex());
    const auto target_dir = dir.value_or(handle.db_path().parent_path() / "snapshots");
    std::error_code ec;
    fs::create_directories(target_dir, ec);
    if (ec) throw IoError("cannot create " + target_dir.string() + ": " + ec.message());

    Snapshot snap;
    snap.instance_id = handle.instance_id();
    snap.lineage = handle.lineage();
    snap.snapshot_id = handle.instance_id() + "-s" + std::to_string(SnapshotAccess::next(handle));
    snap.path = target_dir / (snap.snapshot_id + ".db");
    // No transaction is open while the writer lock is held, so the file on
    // disk is the committed state.
    fs::copy_file(handle.db_path(), snap.path, fs::copy_options::overwrite_existing, ec);
    if (ec) throw IoError("cannot copy database: " + ec.message());
    snap.digest = compute_digest(snap.path);
    write_text_file(sidecar_of(snap.path), canonical_file_text(snap.to_json()));
    return snap;
}

Snapshot load_snapshot(const fs::path& db_file) {
    if (!fs::exists(db_file)) throw IoError("no snapshot at " + db_file.string());
    Snapshot snap;
    if (const auto side = sidecar_of(db_file); fs::exists(side)) {
        try {
            snap = Snapshot::from_json(Json::parse(read_text_file(side)));
        } catch (const Json::exception& e) {
            throw IoError("unreadable snapshot sidecar " + side.string() + ": " + e.what());
        }
    } else {
        snap.snapshot_id = db_file.stem().string();
    }
    snap.path = db_file;
    snap.digest = compute_digest(db_file);
    return snap;
}

void reset(StateHandle& handle, const Snapshot& target) {
    if (target.lineage != handle.lineage())
        throw LineageMismatch("snapshot " + target.snapshot_id + " does not belong to " + handle.instance_id());
    std::lock_guard lock(handle.mutex());
    sqlite::Database source(target.path, sqlite::Database::Mode::ReadOnly);
    handle.db().restore_from(source);
}

std::string compute_digest(sqlite::Database& db) {
    std::string material;
    for (const auto& t : list_tables(db, true)) {
        material += "T\x1e" + t.name + "\x1e" + t.sql + "\x1e";
        for (const auto& c : t.columns) material += c + "\x1f";
        material += "\x1e";
        auto rows = read_rows(db, t);
        std::sort(rows.encodings.begin(), rows.encodings.end());
        for (const auto& e : rows.encodings) material += e + "\x1d";
    }
    return sha256_hex(material);
}

std::string compute_digest(const fs::path& db_file) {
    sqlite::Database db(db_file, sqlite::Database::Mode::ReadOnly);
    return compute_digest(db);
}

std::string current_digest(StateHandle& handle) {
    std::lock_guard lock(handle.mutex());
    return compute_digest(handle.db());
}

Json dump_tables(const fs::path& db_file) {
    sqlite::Database db(db_file, sqlite::Database::Mode::ReadOnly);
    Json out = Json::object();
    for (const auto& t : list_tables(db, false)) {
        auto rows = read_rows(db, t);
        order_by_encoding(rows);
        out[t.name] = rows.rows;
    }
    return out;
}

bool integrity_ok(sqlite::Database& db) {
    try {
        auto st = db.prepare("PRAGMA quick_check");
        return st.step() && st.column_text(0) == "ok";
    } catch (const sqlite::SqlError&) {
        return false;
    }
}

// Diff

Json StateDiff::to_json() const {
    Json out = Json::object();
    for (const auto& [name, t] : tables) {
        Json modified = Json::array();
        for (const auto& m : t.modified) {
            Json changes = Json::array();
            for (const auto& c : m.changes)
                changes.push_back({{"column", c.column}, {"before", c.before}, {"after", c.after}});
            modified.push_back({{"key", m.key}, {"changes", std::move(changes)}});
        }
        out[name] = {{"key_columns", t.key_columns},
                     {"added", t.added},
                     {"removed", t.removed},
                     {"modified", std::move(modified)}};
    }
    return out;
}

StateDiff diff(const Snapshot& initial, const Snapshot& final) { return diff_databases(initial.path, final.path); }

StateDiff diff_databases(const fs::path& initial, const fs::path& final) {
    sqlite::Database a(initial, sqlite::Database::Mode::ReadOnly);
    sqlite::Database b(final, sqlite::Database::Mode::ReadOnly);
    const auto ta = list_tables(a, false);
    const auto tb = list_tables(b, false);
    auto shape = [](const std::vector<TableInfo>& ts) {
        std::vector<std::pair<std::string, std::vector<std::string>>> s;
        for (const auto& t : ts) s.emplace_back(t.name, t.columns);
        return s;
    };
    if (shape(ta) != shape(tb)) throw SchemaMismatch("snapshots do not share a schema");

    StateDiff out;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        const auto& t = ta[i];
        TableDiff td;
        td.key_columns = t.pk;
        auto ra = read_rows(a, t);
        auto rb = read_rows(b, tb[i]);
        if (t.pk.empty()) {
            order_by_encoding(ra);
            order_by_encoding(rb);
            // multiset difference over sorted encodings
            std::size_t x = 0, y = 0;
            while (x < ra.rows.size() || y < rb.rows.size()) {
                if (y >= rb.rows.size() || (x < ra.rows.size() && ra.encodings[x] < rb.encodings[y])) {
                    td.removed.push_back(ra.rows[x++]);
                } else if (x >= ra.rows.size() || rb.encodings[y] < ra.encodings[x]) {
                    td.added.push_back(rb.rows[y++]);
                } else {
                    ++x;
                    ++y;
                }
            }
        } else {
            auto key_of = [&](const Json& row) {
                Json k = Json::object();
                for (const auto& c : t.pk) k[c] = row.at(c);
                return k;
            };
            std::map<std::string, const Json*> ma, mb;
            for (const auto& r : ra.rows) ma[canonical_dump(key_of(r))] = &r;
            for (const auto& r : rb.rows) mb[canonical_dump(key_of(r))] = &r;
            for (const auto& [k, row] : ma) {
                auto it = mb.find(k);
                if (it == mb.end()) {
                    td.removed.push_back(*row);
                    continue;
                }
                ModifiedRow m;
                m.key = key_of(*row);
                for (const auto& c : t.columns) {
                    const auto& before = row->at(c);
                    const auto& after = it->second->at(c);
                    if (canonical_dump(before) != canonical_dump(after)) m.changes.push_back({c, before, after});
                }
                if (!m.changes.empty()) td.modified.push_back(std::move(m));
            }
            for (const auto& [k, row] : mb)
                if (!ma.count(k)) td.added.push_back(*row);
        }
        if (!td.empty()) out.tables.emplace(t.name, std::move(td));
    }
    return out;
}

void apply_diff(const fs::path& db_file, const StateDiff& changes) {
    sqlite::Database db(db_file, sqlite::Database::Mode::ReadWrite);
    db.exec("PRAGMA foreign_keys = OFF");
    db.exec("BEGIN");
    try {
        for (const auto& [table, td] : changes.tables) {
            const auto qt = quote_ident(table);
            for (const auto& row : td.removed) {
                std::string where;
                std::vector<Json> args;
                const auto& cols = td.key_columns;
                if (cols.empty()) {
                    for (const auto& [c, v] : row.items()) {
                        where += (where.empty() ? "" : " AND ") + quote_ident(c) + " IS ?";
                        args.push_back(v);
                    }
                    where = "rowid IN (SELECT rowid FROM " + qt + " WHERE " + where + " LIMIT 1)";
                } else {
                    for (const auto& c : cols) {
                        where += (where.empty() ? "" : " AND ") + quote_ident(c) + " IS ?";
                        args.push_back(row.at(c));
                    }
                }
                auto st = db.prepare("DELETE FROM " + qt + " WHERE " + where);
                for (std::size_t i = 0; i < args.size(); ++i) st.bind(static_cast<int>(i + 1), args[i]);
                st.step();
            }
            for (const auto& m : td.modified) {
                std::string sets, where;
                std::vector<Json> args;
                for (const auto& c : m.changes) {
                    sets += (sets.empty() ? "" : ", ") + quote_ident(c.column) + " = ?";
                    args.push_back(c.after);
                }
                for (const auto& [c, v] : m.key.items()) {
                    where += (where.empty() ? "" : " AND ") + quote_ident(c) + " IS ?";
                    args.push_back(v);
                }
                auto st = db.prepare("UPDATE " + qt + " SET " + sets + " WHERE " + where);
                for (std::size_t i = 0; i < args.size(); ++i) st.bind(static_cast<int>(i + 1), args[i]);
                st.step();
            }
            for (const auto& row : td.added) {
                std::string cols, marks;
                std::vector<Json> args;
                for (const auto& [c, v] : row.items()) {
                    cols += (cols.empty() ? "" : ", ") + quote_ident(c);
                    marks += marks.empty() ? "?" : ", ?";
                    args.push_back(v);
                }
                auto st = db.prepare("INSERT INTO " + qt + " (" + cols + ") VALUES (" + marks + ")");
                for (std::size_t i = 0; i < args.size(); ++i) st.bind(static_cast<int>(i + 1), args[i]);
                st.step();
            }
        }
        db.exec("COMMIT");
    } catch (...) {
        db.exec("ROLLBACK");
        throw;
    }
}

}  // namespace awm
