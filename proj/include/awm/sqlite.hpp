#pragma once

// Thin RAII layer over the SQLite C API. Only what the runtime needs.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "awm/errors.hpp"

struct sqlite3;
struct sqlite3_stmt;

namespace awm::sqlite {

class SqlError : public Error {
public:
    SqlError(int code, const std::string& message) : Error(message), code_(code) {}
    /// Extended result code.
    int code() const noexcept { return code_; }
    bool is_constraint() const noexcept;
    bool is_interrupt() const noexcept;

private:
    int code_;
};

enum class ColumnType { Integer, Real, Text, Blob, Null };

class Statement {
public:
    Statement() = default;
    Statement(sqlite3* db, sqlite3_stmt* stmt) : db_(db), stmt_(stmt) {}
    Statement(Statement&& other) noexcept;
    Statement& operator=(Statement&& other) noexcept;
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;
    ~Statement();

    /// Advances; returns true while a row is available.
    bool step();
    void reset();

    int parameter_count() const;
    /// Name including its prefix character (":limit"), empty for positional.
    std::string parameter_name(int index) const;
    void bind(int index, const nlohmann::json& value);

    int column_count() const;
    std::string column_name(int index) const;
    ColumnType column_type(int index) const;
    std::int64_t column_int64(int index) const;
    double column_double(int index) const;
    std::string column_text(int index) const;
    std::string column_blob(int index) const;
    /// Integers map to JSON integers, reals to numbers, text to strings,
    /// blobs to {"$blob": "<hex>"}.
    nlohmann::json column_json(int index) const;

    bool readonly() const;
    std::string sql() const;

private:
    sqlite3* db_ = nullptr;
    sqlite3_stmt* stmt_ = nullptr;
};

class Database {
public:
    enum class Mode { ReadOnly, ReadWrite, Create };

    Database() = default;
    /// When clock_epoch is set, 'now' (CURRENT_TIMESTAMP, datetime('now'))
    /// evaluates to that unix time on this connection.
    Database(const std::filesystem::path& path, Mode mode,
             std::optional<std::int64_t> clock_epoch = std::nullopt);
    static Database memory(std::optional<std::int64_t> clock_epoch = std::nullopt);

    Database(Database&& other) noexcept;
    Database& operator=(Database&& other) noexcept;
    Database(const Database&) = delete;
    Database& operator=(const Database&) = delete;
    ~Database();

    explicit operator bool() const noexcept { return db_ != nullptr; }
    sqlite3* get() const noexcept { return db_; }

    void exec(std::string_view sql);
    Statement prepare(std::string_view sql);
    std::int64_t changes() const;
    std::string error_message() const;

    /// Interrupts any statement still running after the deadline.
    void set_deadline(std::optional<std::chrono::steady_clock::time_point> deadline);

    /// Copies the full content of `source` into this database.
    void restore_from(Database& source);

private:
    sqlite3* db_ = nullptr;
    std::unique_ptr<std::chrono::steady_clock::time_point> deadline_;
};

/// Name of a registered VFS whose clock is frozen at `unix_seconds`.
std::string frozen_clock_vfs(std::int64_t unix_seconds);

/// True when the text forms one or more complete SQL statements.
bool is_complete_statement(const std::string& sql);

std::string hex_encode(std::string_view bytes);
std::string hex_decode(std::string_view hex);

}  // namespace awm::sqlite
