#include "awm/sql_text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "awm/sqlite.hpp"

namespace awm::sql {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }
bool is_word_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }

std::size_t skip_quoted(std::string_view s, std::size_t i, char close) {
    // i points at the opening quote; doubled closing quotes are escapes
    ++i;
    while (i < s.size()) {
        if (s[i] == close) {
            if (close != ']' && i + 1 < s.size() && s[i + 1] == close) {
                i += 2;
                continue;
            }
            return i + 1;
        }
        ++i;
    }
    return s.size();
}

std::size_t line_of(std::string_view s, std::size_t offset) {
    return 1 + static_cast<std::size_t>(std::count(s.begin(), s.begin() + static_cast<long>(offset), '\n'));
}

std::vector<Token> significant(std::string_view sql) {
    std::vector<Token> out;
    for (const auto& t : tokenize(sql))
        if (t.kind != TokenKind::Space && t.kind != TokenKind::Comment) out.push_back(t);
    return out;
}

bool word_is(const Token& t, std::string_view upper) {
    return t.kind == TokenKind::Word && to_upper(t.text) == upper;
}

std::string identifier_of(const Token& t) {
    return t.kind == TokenKind::QuotedIdentifier || t.kind == TokenKind::String ? unquote_identifier(t.text)
                                                                                 : std::string(t.text);
}

bool is_identifier(const Token& t) {
    return t.kind == TokenKind::Word || t.kind == TokenKind::QuotedIdentifier || t.kind == TokenKind::String;
}

// Reads `name` or `schema.name` starting at i; advances i past it.
std::string read_qualified_name(const std::vector<Token>& toks, std::size_t& i) {
    if (i >= toks.size() || !is_identifier(toks[i])) return {};
    std::string name = identifier_of(toks[i++]);
    if (i + 1 < toks.size() && toks[i].kind == TokenKind::Symbol && toks[i].text == "." &&
        is_identifier(toks[i + 1])) {
        name = identifier_of(toks[i + 1]);
        i += 2;
    }
    return name;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string to_upper(std::string_view text) {
    std::string out(text);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string unquote_identifier(std::string_view text) {
    if (text.size() < 2) return std::string(text);
    const char open = text.front();
    char close = 0;
    switch (open) {
        case '"': close = '"'; break;
        case '`': close = '`'; break;
        case '\'': close = '\''; break;
        case '[': close = ']'; break;
        default: return std::string(text);
    }
    std::string out;
    std::string_view body = text.substr(1, text.back() == close ? text.size() - 2 : text.size() - 1);
    for (std::size_t i = 0; i < body.size(); ++i) {
        out.push_back(body[i]);
        if (close != ']' && body[i] == close && i + 1 < body.size() && body[i + 1] == close) ++i;
    }
    return out;
}

std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const std::size_t start = i;
        const auto c = static_cast<unsigned char>(s[i]);
        TokenKind kind;
        if (std::isspace(c)) {
            while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
            kind = TokenKind::Space;
        } else if (c == '-' && i + 1 < s.size() && s[i + 1] == '-') {
            while (i < s.size() && s[i] != '\n') ++i;
            kind = TokenKind::Comment;
        } else if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
            auto end = s.find("*/", i + 2);
            i = end == std::string_view::npos ? s.size() : end + 2;
            kind = TokenKind::Comment;
        } else if (c == '\'') {
            i = skip_quoted(s, i, '\'');
            kind = TokenKind::String;
        } else if (c == '"' || c == '`') {
            i = skip_quoted(s, i, static_cast<char>(c));
            kind = TokenKind::QuotedIdentifier;
        } else if (c == '[') {
            i = skip_quoted(s, i, ']');
            kind = TokenKind::QuotedIdentifier;
        } else if (std::isdigit(c) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            ++i;
            while (i < s.size()) {
                const auto d = static_cast<unsigned char>(s[i]);
                if (std::isalnum(d) || d == '.') {
                    ++i;
                } else if ((d == '+' || d == '-') && (s[i - 1] == 'e' || s[i - 1] == 'E')) {
                    ++i;
                } else {
                    break;
                }
            }
            kind = TokenKind::Number;
        } else if ((c == ':' || c == '@' || c == '$') && i + 1 < s.size() &&
                   is_word_start(static_cast<unsigned char>(s[i + 1]))) {
            ++i;
            while (i < s.size() && is_word_char(static_cast<unsigned char>(s[i]))) ++i;
            kind = TokenKind::Parameter;
        } else if (c == '?') {
            ++i;
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            kind = TokenKind::Parameter;
        } else if (is_word_start(c)) {
            while (i < s.size() && is_word_char(static_cast<unsigned char>(s[i]))) ++i;
            kind = TokenKind::Word;
        } else if (c == ';') {
            ++i;
            kind = TokenKind::Semicolon;
        } else {
            ++i;
            kind = TokenKind::Symbol;
        }
        out.push_back({kind, s.substr(start, i - start), start});
    }
    return out;
}

std::vector<ScriptItem> scan_script(std::string_view sql) {
    std::vector<ScriptItem> items;
    const auto tokens = tokenize(sql);
    std::optional<std::size_t> stmt_begin;
    std::size_t stmt_end = 0;

    auto flush = [&](bool force) {
        if (!stmt_begin) return;
        std::string text = trim(sql.substr(*stmt_begin, stmt_end - *stmt_begin));
        // triggers contain inner semicolons; keep accumulating until complete
        if (!force && !sqlite::is_complete_statement(text + ";")) return;
        if (!text.empty()) items.push_back({ScriptItem::Kind::Statement, text, {}, line_of(sql, *stmt_begin)});
        stmt_begin.reset();
    };

    for (const auto& t : tokens) {
        if (t.kind == TokenKind::Semicolon) {
            if (stmt_begin) {
                const auto before = stmt_begin;
                flush(false);
                if (stmt_begin == before) stmt_end = t.offset + t.text.size();
            }
            continue;
        }
        if (t.kind == TokenKind::Space) continue;
        if (t.kind == TokenKind::Comment) {
            if (!stmt_begin && t.text.rfind("-- @", 0) == 0) {
                auto body = t.text.substr(4);
                auto sp = body.find_first_of(" \t");
                std::string key(body.substr(0, sp));
                std::string value = sp == std::string_view::npos ? std::string() : trim(body.substr(sp + 1));
                items.push_back({ScriptItem::Kind::Directive, value, key, line_of(sql, t.offset)});
            }
            continue;
        }
        if (!stmt_begin) stmt_begin = t.offset;
        stmt_end = t.offset + t.text.size();
    }
    flush(true);
    // statement text may still end with the last trigger ';' that was absorbed
    for (auto& item : items) {
        if (item.kind == ScriptItem::Kind::Statement && !item.text.empty() && item.text.back() == ';') {
            item.text.pop_back();
            item.text = trim(item.text);
        }
    }
    return items;
}

std::vector<std::string> split_statements(std::string_view sql) {
    std::vector<std::string> out;
    for (auto& item : scan_script(sql))
        if (item.kind == ScriptItem::Kind::Statement) out.push_back(std::move(item.text));
    return out;
}

std::optional<std::string> find_write_verb(std::string_view sql) {
    static constexpr std::array<std::string_view, 11> kVerbs = {
        "INSERT", "UPDATE", "DELETE", "DROP", "ALTER", "CREATE",
        "ATTACH", "DETACH", "VACUUM", "REINDEX", "PRAGMA"};
    const auto toks = significant(sql);
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].kind != TokenKind::Word) continue;
        const auto word = to_upper(toks[i].text);
        if (std::find(kVerbs.begin(), kVerbs.end(), word) != kVerbs.end()) return word;
        // replace(x, y, z) is a scalar function; only a leading REPLACE writes
        if (i == 0 && word == "REPLACE") return word;
    }
    return std::nullopt;
}

std::optional<std::string> insert_target(std::string_view sql) {
    const auto toks = significant(sql);
    std::size_t i = 0;
    if (i < toks.size() && word_is(toks[i], "WITH")) return std::nullopt;
    if (i < toks.size() && word_is(toks[i], "REPLACE")) {
        ++i;
    } else if (i < toks.size() && word_is(toks[i], "INSERT")) {
        ++i;
        if (i + 1 < toks.size() && word_is(toks[i], "OR")) i += 2;
    } else {
        return std::nullopt;
    }
    if (i >= toks.size() || !word_is(toks[i], "INTO")) return std::nullopt;
    ++i;
    auto name = read_qualified_name(toks, i);
    if (name.empty()) return std::nullopt;
    return name;
}

CreateInfo classify_create(std::string_view sql) {
    CreateInfo info;
    const auto toks = significant(sql);
    std::size_t i = 0;
    if (i >= toks.size() || !word_is(toks[i], "CREATE")) return info;
    ++i;
    while (i < toks.size() && (word_is(toks[i], "TEMP") || word_is(toks[i], "TEMPORARY") ||
                               word_is(toks[i], "UNIQUE") || word_is(toks[i], "VIRTUAL")))
        ++i;
    if (i >= toks.size()) return info;
    CreateInfo::Kind kind;
    if (word_is(toks[i], "TABLE")) kind = CreateInfo::Kind::Table;
    else if (word_is(toks[i], "INDEX")) kind = CreateInfo::Kind::Index;
    else if (word_is(toks[i], "TRIGGER")) kind = CreateInfo::Kind::Trigger;
    else if (word_is(toks[i], "VIEW")) kind = CreateInfo::Kind::View;
    else return info;
    ++i;
    if (i + 2 < toks.size() && word_is(toks[i], "IF") && word_is(toks[i + 1], "NOT") &&
        word_is(toks[i + 2], "EXISTS"))
        i += 3;
    info.kind = kind;
    info.name = read_qualified_name(toks, i);
    if (kind == CreateInfo::Kind::Index || kind == CreateInfo::Kind::Trigger) {
        for (; i < toks.size(); ++i) {
            if (word_is(toks[i], "ON")) {
                ++i;
                info.on_table = read_qualified_name(toks, i);
                break;
            }
        }
    }
    return info;
}

}  // namespace awm::sql
