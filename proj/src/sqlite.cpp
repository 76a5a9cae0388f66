#include "awm/sqlite.hpp"

#include <sqlite3.h>

#include <map>
#include <mutex>
#include <utility>

namespace awm::sqlite {

namespace {

[[noreturn]] void raise(sqlite3* db, int rc, std::string_view context = {}) {
    const int ext = db ? sqlite3_extended_errcode(db) : rc;
    std::string msg = db ? sqlite3_errmsg(db) : sqlite3_errstr(rc);
    if (!context.empty()) msg = std::string(context) + ": " + msg;
    throw SqlError(ext, msg);
}

struct ClockVfs {
    sqlite3_vfs vfs;  // must stay first: callbacks cast back from sqlite3_vfs*
    std::string name;
    std::int64_t epoch = 0;
};

int clock_current_time(sqlite3_vfs* vfs, double* out) {
    const auto* self = reinterpret_cast<const ClockVfs*>(vfs);
    *out = 2440587.5 + static_cast<double>(self->epoch) / 86400.0;
    return SQLITE_OK;
}

int clock_current_time_int64(sqlite3_vfs* vfs, sqlite3_int64* out) {
    const auto* self = reinterpret_cast<const ClockVfs*>(vfs);
    // Julian day number of the unix epoch, in milliseconds.
    *out = 210866760000000LL + self->epoch * 1000;
    return SQLITE_OK;
}

int progress_callback(void* arg) {
    const auto* deadline = static_cast<const std::chrono::steady_clock::time_point*>(arg);
    return std::chrono::steady_clock::now() > *deadline ? 1 : 0;
}

}  // namespace

bool SqlError::is_constraint() const noexcept {
    return (code_ & 0xff) == SQLITE_CONSTRAINT;
}

bool SqlError::is_interrupt() const noexcept {
    return (code_ & 0xff) == SQLITE_INTERRUPT;
}

std::string frozen_clock_vfs(std::int64_t unix_seconds) {
    static std::mutex mu;
    static std::map<std::int64_t, std::unique_ptr<ClockVfs>> registry;
    std::lock_guard lock(mu);
    auto it = registry.find(unix_seconds);
    if (it != registry.end()) return it->second->name;

    sqlite3_initialize();
    sqlite3_vfs* base = sqlite3_vfs_find(nullptr);
    auto entry = std::make_unique<ClockVfs>();
    entry->vfs = *base;
    entry->name = "awm-clock-" + std::to_string(unix_seconds);
    entry->epoch = unix_seconds;
    entry->vfs.zName = entry->name.c_str();
    entry->vfs.pNext = nullptr;
    entry->vfs.xCurrentTime = clock_current_time;
    if (entry->vfs.iVersion >= 2) entry->vfs.xCurrentTimeInt64 = clock_current_time_int64;
    if (int rc = sqlite3_vfs_register(&entry->vfs, 0); rc != SQLITE_OK) raise(nullptr, rc, "vfs");
    auto name = entry->name;
    registry.emplace(unix_seconds, std::move(entry));
    return name;
}

bool is_complete_statement(const std::string& sql) {
    return sqlite3_complete(sql.c_str()) != 0;
}

std::string hex_encode(std::string_view bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out.push_back(kDigits[c >> 4]);
        out.push_back(kDigits[c & 0xf]);
    }
    return out;
}

std::string hex_decode(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw Error("invalid hex digit");
    };
    if (hex.size() % 2 != 0) throw Error("odd-length hex string");
    std::string out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2)
        out.push_back(static_cast<char>(nibble(hex[i]) << 4 | nibble(hex[i + 1])));
    return out;
}

// Statement

Statement::Statement(Statement&& other) noexcept
    : db_(std::exchange(other.db_, nullptr)), stmt_(std::exchange(other.stmt_, nullptr)) {}

Statement& Statement::operator=(Statement&& other) noexcept {
    if (this != &other) {
        if (stmt_) sqlite3_finalize(stmt_);
        db_ = std::exchange(other.db_, nullptr);
        stmt_ = std::exchange(other.stmt_, nullptr);
    }
    return *this;
}

Statement::~Statement() {
    if (stmt_) sqlite3_finalize(stmt_);
}

bool Statement::step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    raise(db_, rc);
}

void Statement::reset() {
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
}

int Statement::parameter_count() const { return sqlite3_bind_parameter_count(stmt_); }

std::string Statement::parameter_name(int index) const {
    const char* name = sqlite3_bind_parameter_name(stmt_, index);
    return name ? name : "";
}

void Statement::bind(int index, const nlohmann::json& value) {
    int rc = SQLITE_OK;
    switch (value.type()) {
        case nlohmann::json::value_t::null:
        case nlohmann::json::value_t::discarded:
            rc = sqlite3_bind_null(stmt_, index);
            break;
        case nlohmann::json::value_t::boolean:
            rc = sqlite3_bind_int64(stmt_, index, value.get<bool>() ? 1 : 0);
            break;
        case nlohmann::json::value_t::number_integer:
            rc = sqlite3_bind_int64(stmt_, index, value.get<std::int64_t>());
            break;
        case nlohmann::json::value_t::number_unsigned:
            rc = sqlite3_bind_int64(stmt_, index, static_cast<std::int64_t>(value.get<std::uint64_t>()));
            break;
        case nlohmann::json::value_t::number_float:
            rc = sqlite3_bind_double(stmt_, index, value.get<double>());
            break;
        case nlohmann::json::value_t::string: {
            const auto& s = value.get_ref<const std::string&>();
            rc = sqlite3_bind_text(stmt_, index, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
            break;
        }
        default: {
            if (value.is_object() && value.size() == 1 && value.contains("$blob")) {
                const auto bytes = hex_decode(value["$blob"].get<std::string>());
                rc = sqlite3_bind_blob(stmt_, index, bytes.data(), static_cast<int>(bytes.size()),
                                       SQLITE_TRANSIENT);
            } else {
                const auto text = value.dump();
                rc = sqlite3_bind_text(stmt_, index, text.data(), static_cast<int>(text.size()),
                                       SQLITE_TRANSIENT);
            }
        }
    }
    if (rc != SQLITE_OK) raise(db_, rc, "bind");
}

int Statement::column_count() const { return sqlite3_column_count(stmt_); }

std::string Statement::column_name(int index) const {
    const char* name = sqlite3_column_name(stmt_, index);
    return name ? name : "";
}

ColumnType Statement::column_type(int index) const {
    switch (sqlite3_column_type(stmt_, index)) {
        case SQLITE_INTEGER: return ColumnType::Integer;
        case SQLITE_FLOAT: return ColumnType::Real;
        case SQLITE_TEXT: return ColumnType::Text;
        case SQLITE_BLOB: return ColumnType::Blob;
        default: return ColumnType::Null;
    }
}

std::int64_t Statement::column_int64(int index) const { return sqlite3_column_int64(stmt_, index); }

double Statement::column_double(int index) const { return sqlite3_column_double(stmt_, index); }

std::string Statement::column_text(int index) const {
    const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, index));
    const int n = sqlite3_column_bytes(stmt_, index);
    return p ? std::string(p, static_cast<std::size_t>(n)) : std::string();
}

std::string Statement::column_blob(int index) const {
    const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt_, index));
    const int n = sqlite3_column_bytes(stmt_, index);
    return p ? std::string(p, static_cast<std::size_t>(n)) : std::string();
}

nlohmann::json Statement::column_json(int index) const {
    switch (column_type(index)) {
        case ColumnType::Integer: return column_int64(index);
        case ColumnType::Real: return column_double(index);
        case ColumnType::Text: return column_text(index);
        case ColumnType::Blob: return {{"$blob", hex_encode(column_blob(index))}};
        case ColumnType::Null: break;
    }
    return nullptr;
}

bool Statement::readonly() const { return sqlite3_stmt_readonly(stmt_) != 0; }

std::string Statement::sql() const {
    const char* s = sqlite3_sql(stmt_);
    return s ? s : "";
}

// Database

Database::Database(const std::filesystem::path& path, Mode mode, std::optional<std::int64_t> clock_epoch) {
    int flags = SQLITE_OPEN_NOMUTEX | SQLITE_OPEN_URI;
    switch (mode) {
        case Mode::ReadOnly: flags |= SQLITE_OPEN_READONLY; break;
        case Mode::ReadWrite: flags |= SQLITE_OPEN_READWRITE; break;
        case Mode::Create: flags |= SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE; break;
    }
    std::string vfs;
    if (clock_epoch) vfs = frozen_clock_vfs(*clock_epoch);
    const int rc = sqlite3_open_v2(path.string().c_str(), &db_, flags, vfs.empty() ? nullptr : vfs.c_str());
    if (rc != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : sqlite3_errstr(rc);
        if (db_) sqlite3_close(db_);
        db_ = nullptr;
        throw IoError("cannot open database " + path.string() + ": " + msg);
    }
    sqlite3_extended_result_codes(db_, 1);
}

Database Database::memory(std::optional<std::int64_t> clock_epoch) {
    return Database(":memory:", Mode::Create, clock_epoch);
}

Database::Database(Database&& other) noexcept
    : db_(std::exchange(other.db_, nullptr)), deadline_(std::move(other.deadline_)) {}

Database& Database::operator=(Database&& other) noexcept {
    if (this != &other) {
        if (db_) sqlite3_close_v2(db_);
        db_ = std::exchange(other.db_, nullptr);
        deadline_ = std::move(other.deadline_);
    }
    return *this;
}

Database::~Database() {
    if (db_) sqlite3_close_v2(db_);
}

void Database::exec(std::string_view sql) {
    char* err = nullptr;
    const std::string text(sql);
    const int rc = sqlite3_exec(db_, text.c_str(), nullptr, nullptr, &err);
    if (rc != SQLITE_OK) {
        std::string msg = err ? err : sqlite3_errstr(rc);
        sqlite3_free(err);
        throw SqlError(sqlite3_extended_errcode(db_), msg);
    }
}

Statement Database::prepare(std::string_view sql) {
    sqlite3_stmt* stmt = nullptr;
    const char* tail = nullptr;
    const int rc = sqlite3_prepare_v2(db_, sql.data(), static_cast<int>(sql.size()), &stmt, &tail);
    if (rc != SQLITE_OK) raise(db_, rc);
    if (!stmt) throw SqlError(SQLITE_MISUSE, "empty statement");
    return Statement(db_, stmt);
}

std::int64_t Database::changes() const { return sqlite3_changes(db_); }

std::string Database::error_message() const { return sqlite3_errmsg(db_); }

void Database::set_deadline(std::optional<std::chrono::steady_clock::time_point> deadline) {
    if (!deadline) {
        sqlite3_progress_handler(db_, 0, nullptr, nullptr);
        deadline_.reset();
        return;
    }
    deadline_ = std::make_unique<std::chrono::steady_clock::time_point>(*deadline);
    sqlite3_progress_handler(db_, 1000, progress_callback, deadline_.get());
}

void Database::restore_from(Database& source) {
    sqlite3_backup* backup = sqlite3_backup_init(db_, "main", source.db_, "main");
    if (!backup) raise(db_, sqlite3_errcode(db_), "backup");
    const int rc = sqlite3_backup_step(backup, -1);
    sqlite3_backup_finish(backup);
    if (rc != SQLITE_DONE) raise(db_, rc, "backup");
}

}  // namespace awm::sqlite
