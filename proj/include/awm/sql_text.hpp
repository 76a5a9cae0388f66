#pragma once

// Lexical helpers for SQL text held in bundles. This is a tokenizer, not a
// parser: statements are still checked by SQLite itself wherever it matters.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace awm::sql {

enum class TokenKind {
    Word,              // keywords and bare identifiers
    QuotedIdentifier,  // "x", `x`, [x]
    String,            // 'x'
    Number,
    Parameter,         // :name, @name, $name, ?NNN
    Symbol,
    Semicolon,
    Comment,
    Space,
};

struct Token {
    TokenKind kind;
    std::string_view text;
    std::size_t offset;
};

/// Never fails: unterminated literals run to end of input.
std::vector<Token> tokenize(std::string_view sql);

/// One entry of a scanned script: either a statement or a `-- @key value`
/// directive comment found between statements.
struct ScriptItem {
    enum class Kind { Statement, Directive } kind;
    std::string text;   // statement text without the trailing ';', or directive value
    std::string key;    // directive key ("table", "rationale"); empty for statements
    std::size_t line;   // 1-based line of the first character
};

std::vector<ScriptItem> scan_script(std::string_view sql);

/// Statements only, trimmed, without trailing semicolons.
std::vector<std::string> split_statements(std::string_view sql);

/// First data- or schema-modifying verb in the statement, upper-cased.
std::optional<std::string> find_write_verb(std::string_view sql);

/// Table named by INSERT [OR x] INTO / REPLACE INTO.
std::optional<std::string> insert_target(std::string_view sql);

struct CreateInfo {
    enum class Kind { Table, Index, Trigger, View, Other } kind = Kind::Other;
    std::string name;
    std::string on_table;  // indexes and triggers
};

CreateInfo classify_create(std::string_view sql);

std::string unquote_identifier(std::string_view text);
std::string to_upper(std::string_view text);
std::string to_lower(std::string_view text);

}  // namespace awm::sql
