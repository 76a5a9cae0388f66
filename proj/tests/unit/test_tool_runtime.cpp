#include <doctest.h>

#include <random>
#include <set>

#include "awm/errors.hpp"
#include "awm/state_store.hpp"
#include "awm/tool_runtime.hpp"
#include "support.hpp"

using namespace awm;
using awm::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct Env {
    TempDir tmp;
    StateHandle handle;
    Env() : handle(provision(test::fixture_bundle(), "rt", [this] {
                       ProvisionOptions o;
                       o.root = tmp.path();
                       return o;
                   }()).handle) {}
    ToolResult call(const std::string& tool, Json args = Json::object(), const RuntimeOptions& o = {}) {
        return execute_tool(test::fixture_bundle(), handle, {tool, std::move(args)}, o);
    }
};

std::vector<Json> direct_query(const fs::path& db_file, const std::string& sql) {
    sqlite::Database db(db_file, sqlite::Database::Mode::ReadOnly);
    auto st = db.prepare(sql);
    std::vector<Json> rows;
    while (st.step()) {
        Json row = Json::object();
        for (int c = 0; c < st.column_count(); ++c) row[st.column_name(c)] = st.column_json(c);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

TEST_CASE("list_tools is name-sorted and mirrors the toolset file") {
    const auto tools = list_tools(test::fixture_bundle());
    REQUIRE(tools.size() == 6);
    for (std::size_t i = 1; i < tools.size(); ++i) CHECK(tools[i - 1].name < tools[i].name);

    const auto raw = Json::parse(read_text_file(test::fixture_dir() / "toolset.json"));
    for (const auto& t : raw) {
        const auto it = std::find_if(tools.begin(), tools.end(), [&](const auto& d) { return d.name == t["name"]; });
        REQUIRE(it != tools.end());
        REQUIRE(it->params.size() == t["params"].size());
        for (std::size_t i = 0; i < it->params.size(); ++i) {
            CHECK(it->params[i].name == t["params"][i]["name"]);
            CHECK(it->params[i].required == t["params"][i]["required"].get<bool>());
        }
    }
    const auto borrow = std::find_if(tools.begin(), tools.end(), [](const auto& d) { return d.name == "borrow_book"; });
    CHECK(borrow->input_schema["required"] == Json::array({"book_id"}));
    CHECK(borrow->input_schema["properties"]["days"]["default"] == 14);
    CHECK(borrow->response_example["loan"]["due_at"].is_string());

    EnvironmentBundle empty;
    CHECK(list_tools(empty).empty());
}

TEST_CASE("typecheck_arguments fills defaults and rejects bad input") {
    ToolDef t;
    t.name = "page";
    ParamSpec limit;
    limit.name = "limit";
    limit.type = SemanticType::Integer;
    limit.default_value = 20;
    t.params.push_back(limit);

    CHECK(typecheck_arguments(t, {{"limit", 5}}) == Json{{"limit", 5}});
    CHECK(typecheck_arguments(t, Json::object()) == Json{{"limit", 20}});
    CHECK(typecheck_arguments(t, {{"limit", 5.0}})["limit"].is_number_integer());
    CHECK_THROWS_AS(typecheck_arguments(t, {{"limit", "five"}}), TypeMismatch);
    CHECK_THROWS_AS(typecheck_arguments(t, {{"limit", 5.5}}), TypeMismatch);
    CHECK_THROWS_AS(typecheck_arguments(t, {{"limit", true}}), TypeMismatch);
    CHECK_THROWS_AS(typecheck_arguments(t, {{"limit", nullptr}}), TypeMismatch);
    CHECK_THROWS_AS(typecheck_arguments(t, {{"limti", 5}}), UnknownParam);
    CHECK_THROWS_AS(typecheck_arguments(t, Json::array()), TypeMismatch);

    t.params[0].required = true;
    try {
        typecheck_arguments(t, Json::object());
        FAIL("expected MissingRequired");
    } catch (const MissingRequired& e) {
        CHECK(e.param() == "limit");
    }
}

TEST_CASE("paged search returns limit rows matching a direct query") {
    Env env;
    const auto r = env.call("search_books", {{"genre", "fantasy"}, {"limit", 5}});
    REQUIRE(r.is_ok());
    const auto rows = r.payload["books"];
    REQUIRE(rows.size() == 5);
    const auto oracle = direct_query(env.handle.db_path(), "SELECT id, title FROM books WHERE genre = 'fantasy' ORDER BY id");
    CHECK(oracle.size() == 7);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i]["id"] == oracle[i]["id"]);
        CHECK(rows[i]["title"] == oracle[i]["title"]);
        CHECK(rows[i]["is_reference"].is_boolean());
    }
    CHECK(env.call("search_books", {{"genre", "fantasy"}}).payload["books"].size() == 7);
    CHECK(env.call("search_books", {{"query", "Le Guin"}}).payload["books"].size() == 2);
}

TEST_CASE("unknown tool is a user error and leaves state untouched") {
    Env env;
    const auto before = current_digest(env.handle);
    const auto r = env.call("no_such_tool");
    CHECK(r.status == ToolStatus::UserError);
    CHECK(r.message.find("unknown tool") != std::string::npos);
    CHECK(current_digest(env.handle) == before);
}

TEST_CASE("missing required argument is a user error and leaves state untouched") {
    Env env;
    const auto before = current_digest(env.handle);
    const auto r = env.call("borrow_book", {{"days", 3}});
    CHECK(r.status == ToolStatus::UserError);
    CHECK(r.message.find("missing required argument") != std::string::npos);
    CHECK(current_digest(env.handle) == before);
}

TEST_CASE("constraint violations surface the database message verbatim") {
    Env env;
    const auto before = current_digest(env.handle);
    const auto r = env.call("update_profile", {{"email", "grace@example.org"}});
    CHECK(r.status == ToolStatus::UserError);
    CHECK(r.message == "UNIQUE constraint failed: members.email");
    CHECK(current_digest(env.handle) == before);
}

TEST_CASE("failed requirements roll back earlier statements") {
    Env env;
    const auto before = current_digest(env.handle);
    auto r = env.call("borrow_book", {{"book_id", 13}});
    CHECK(r.status == ToolStatus::UserError);
    CHECK(r.message == "book not available");
    r = env.call("return_book", {{"loan_id", 5}});  // belongs to member 2
    CHECK(r.status == ToolStatus::UserError);
    CHECK(current_digest(env.handle) == before);
}

TEST_CASE("mutating tools bind the frozen clock and the current user") {
    Env env;
    const auto r = env.call("borrow_book", {{"book_id", 9}, {"days", 21}});
    REQUIRE(r.is_ok());
    CHECK(r.payload["loan"]["borrowed_at"] == "2025-01-01 00:00:00");
    CHECK(r.payload["loan"]["due_at"] == "2025-01-22 00:00:00");
    const auto rows = direct_query(env.handle.db_path(), "SELECT member_id FROM loans WHERE id = " +
                                                             r.payload["loan"]["loan_id"].dump());
    REQUIRE(rows.size() == 1);
    CHECK(rows[0]["member_id"] == 1);

    RuntimeOptions as_three;
    as_three.current_user = 3;
    const auto mine = env.call("list_my_loans", Json::object(), as_three);
    REQUIRE(mine.is_ok());
    CHECK(mine.payload["loans"].size() == 2);
}

TEST_CASE("property: results never contain rows owned by other members") {
    Env env;
    for (std::int64_t user = 1; user <= 5; ++user) {
        RuntimeOptions o;
        o.current_user = user;
        const auto r = env.call("list_my_loans", {{"include_returned", true}}, o);
        REQUIRE(r.is_ok());
        const auto owned = direct_query(env.handle.db_path(),
                                        "SELECT id FROM loans WHERE member_id = " + std::to_string(user) + " ORDER BY id");
        REQUIRE(r.payload["loans"].size() == owned.size());
        for (std::size_t i = 0; i < owned.size(); ++i) CHECK(r.payload["loans"][i]["loan_id"] == owned[i]["id"]);

        // returning any loan the user does not own must fail
        for (int loan = 1; loan <= 15; ++loan) {
            const bool is_owned = std::any_of(owned.begin(), owned.end(), [&](const Json& x) { return x["id"] == loan; });
            if (is_owned) continue;
            CHECK(env.call("return_book", {{"loan_id", loan}}, o).status == ToolStatus::UserError);
        }
    }
}

TEST_CASE("property: non-ok results never change the digest; read-only tools never do") {
    Env env;
    std::mt19937 rng(11);
    RuntimeOptions strict;
    strict.assert_readonly = true;
    const std::vector<std::string> tools = {"search_books", "get_book", "list_my_loans", "borrow_book", "return_book",
                                            "update_profile"};
    for (int i = 0; i < 120; ++i) {
        const auto& tool = tools[rng() % tools.size()];
        Json args = Json::object();
        switch (rng() % 4) {
            case 0: args["book_id"] = static_cast<int>(rng() % 25); break;
            case 1: args["loan_id"] = static_cast<int>(rng() % 20); break;
            case 2: args["email"] = (rng() % 2) ? "edsger@example.org" : "a" + std::to_string(i) + "@x.org"; break;
            default: args["limit"] = "many";
        }
        const auto before = current_digest(env.handle);
        const auto r = env.call(tool, args, strict);
        CHECK(r.status != ToolStatus::ServerError);
        if (!r.is_ok() || !test::fixture_bundle().find_tool(tool)->mutating) CHECK(current_digest(env.handle) == before);
    }
}

TEST_CASE("identical state and call give identical payloads") {
    Env a, b;
    const std::vector<ToolCall> calls = {{"borrow_book", {{"book_id", 4}}},
                                         {"list_my_loans", {{"include_returned", true}}},
                                         {"return_book", {{"loan_id", 3}}},
                                         {"get_book", {{"book_id", 4}}}};
    for (const auto& c : calls) {
        const auto ra = execute_tool(test::fixture_bundle(), a.handle, c);
        const auto rb = execute_tool(test::fixture_bundle(), b.handle, c);
        CHECK(canonical_dump(ra.to_json()) == canonical_dump(rb.to_json()));
        CHECK(current_digest(a.handle) == current_digest(b.handle));
    }
}

TEST_CASE("multi-statement plans may use temp projections") {
    auto bundle = test::fixture_bundle();
    ToolDef stats;
    stats.name = "genre_stats";
    stats.plan = {{"tmp", "CREATE TEMP TABLE per_genre AS SELECT genre, COUNT(*) AS n, SUM(copies_available) AS copies FROM books GROUP BY genre", Requirement::None, ""},
                  {"top", "SELECT genre, n, copies FROM per_genre ORDER BY n DESC, genre LIMIT 1", Requirement::None, ""},
                  {"avg", "SELECT AVG(n) AS average FROM per_genre", Requirement::None, ""}};
    stats.response = {{"top", "top", ResponseShape::Row, {{"genre", SemanticType::Text}, {"n", SemanticType::Integer}}},
                      {"average", "avg", ResponseShape::Value, {{"average", SemanticType::Number}}}};
    bundle.toolset.push_back(stats);
    CHECK(validate_bundle(bundle).empty());

    TempDir tmp;
    ProvisionOptions o;
    o.root = tmp.path();
    auto p = provision(bundle, "stats", o);
    const auto before = current_digest(p.handle);
    RuntimeOptions strict;
    strict.assert_readonly = true;
    for (int i = 0; i < 2; ++i) {
        const auto r = execute_tool(bundle, p.handle, {"genre_stats", Json::object()}, strict);
        REQUIRE(r.is_ok());
        CHECK(r.payload["top"] == Json{{"genre", "fantasy"}, {"n", 7}});
        CHECK(r.payload["average"] == doctest::Approx(4.0));
    }
    CHECK(current_digest(p.handle) == before);
}

TEST_CASE("runaway statements hit the timeout as a server error") {
    auto bundle = test::fixture_bundle();
    ToolDef slow;
    slow.name = "spin";
    slow.plan = {{"s", "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT COUNT(*) FROM c", Requirement::None, ""}};
    bundle.toolset.push_back(slow);
    TempDir tmp;
    ProvisionOptions o;
    o.root = tmp.path();
    auto p = provision(bundle, "slow", o);
    RuntimeOptions quick;
    quick.timeout = std::chrono::milliseconds(50);
    const auto r = execute_tool(bundle, p.handle, {"spin", Json::object()}, quick);
    CHECK(r.status == ToolStatus::ServerError);
    CHECK(r.message.find("timeout") != std::string::npos);
    // the instance remains usable afterwards
    CHECK(execute_tool(bundle, p.handle, {"get_book", {{"book_id", 1}}}).is_ok());
}

TEST_CASE("responses are capped") {
    Env env;
    RuntimeOptions small;
    small.row_cap = 3;
    const auto r = env.call("search_books", Json::object(), small);
    REQUIRE(r.is_ok());
    CHECK(r.payload["books"].size() == 3);
    CHECK(r.message.find("truncated") != std::string::npos);
}
