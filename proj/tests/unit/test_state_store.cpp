#include <doctest.h>

#include <random>
#include <thread>

#include "awm/errors.hpp"
#include "awm/state_store.hpp"
#include "awm/tool_runtime.hpp"
#include "support.hpp"

using namespace awm;
using awm::test::TempDir;
namespace fs = std::filesystem;

namespace {

// parent/child bundle whose seed has `total` inserts of which `failing`
// reference a missing parent.
EnvironmentBundle threshold_bundle(std::size_t total, std::size_t failing) {
    EnvironmentBundle b;
    b.manifest.scenario = {"threshold", "", "", "other"};
    b.schema.tables.push_back({"parent", "CREATE TABLE parent (id INTEGER PRIMARY KEY, label TEXT)", {}});
    b.schema.tables.push_back(
        {"child", "CREATE TABLE child (id INTEGER PRIMARY KEY, parent_id INTEGER NOT NULL REFERENCES parent (id))", {}});
    SeedTable parents{"parent", "", {}};
    for (int i = 1; i <= 3; ++i)
        parents.statements.push_back("INSERT INTO parent (id, label) VALUES (" + std::to_string(i) + ", 'p')");
    SeedTable children{"child", "", {}};
    for (std::size_t i = 0; i + 3 < total; ++i) {
        const int parent = i < failing ? 99 : 1 + static_cast<int>(i % 3);
        children.statements.push_back("INSERT INTO child (id, parent_id) VALUES (" + std::to_string(i + 1) + ", " +
                                      std::to_string(parent) + ")");
    }
    // children listed first: provisioning must reorder by dependency
    b.seed.tables = {children, parents};
    return b;
}

std::size_t count_failures_directly(const EnvironmentBundle& b) {
    auto db = sqlite::Database::memory();
    db.exec("PRAGMA foreign_keys = ON");
    for (const auto& t : b.schema.tables) db.exec(t.ddl);
    std::size_t failed = 0;
    for (const auto* name : {"parent", "child"})
        for (const auto& s : b.seed.tables)
            if (s.table == name)
                for (const auto& stmt : s.statements) {
                    try {
                        db.exec(stmt);
                    } catch (const sqlite::SqlError&) {
                        ++failed;
                    }
                }
    return failed;
}

ProvisionOptions opts_in(const TempDir& tmp) {
    ProvisionOptions o;
    o.root = tmp.path();
    return o;
}

}  // namespace

TEST_CASE("fixture provisions all 40 inserts") {
    TempDir tmp;
    auto p = provision(test::fixture_bundle(), "i0", opts_in(tmp));
    CHECK(p.report.inserts_applied == 40);
    CHECK(p.report.inserts_failed == 0);
    CHECK(p.report.ddl_failed == 0);
    CHECK(p.report.ddl_total == 5);
    CHECK(fs::exists(p.handle.db_path()));
    CHECK(integrity_ok(p.handle.db()));
}

TEST_CASE("two failing inserts out of ten exceed the threshold") {
    TempDir tmp;
    const auto b = threshold_bundle(10, 2);
    CHECK(count_failures_directly(b) == 2);
    try {
        provision(b, "t", opts_in(tmp));
        FAIL("expected ThresholdExceeded");
    } catch (const ThresholdExceeded& e) {
        CHECK(e.kind() == "insert");
        CHECK(e.failed() == 2);
        CHECK(e.total() == 10);
    }
    CHECK_FALSE(fs::exists(tmp / "t.db"));
}

TEST_CASE("nine failing inserts out of a hundred are accepted with warnings") {
    TempDir tmp;
    const auto b = threshold_bundle(100, 9);
    const auto expected = count_failures_directly(b);
    CHECK(expected == 9);
    auto p = provision(b, "t", opts_in(tmp));
    CHECK(p.report.inserts_failed == expected);
    CHECK(p.report.warnings.size() == expected);
    CHECK(p.report.inserts_applied == 100 - expected);
}

TEST_CASE("ddl failures have their own threshold") {
    TempDir tmp;
    auto b = threshold_bundle(10, 0);
    b.schema.tables.push_back({"bad", "CREATE TABLE bad (id INTEGER PRIMARY KEY, x NOT A TYPE (", {}});
    try {
        provision(b, "t", opts_in(tmp));
        FAIL("expected ThresholdExceeded");
    } catch (const ThresholdExceeded& e) {
        CHECK(e.kind() == "ddl");
        CHECK(e.failed() == 1);
        CHECK(e.total() == 3);
    }
}

TEST_CASE("clock is frozen at the instance epoch") {
    TempDir tmp;
    auto p = provision(test::fixture_bundle(), "i0", opts_in(tmp));
    auto st = p.handle.db().prepare("SELECT datetime('now'), CURRENT_TIMESTAMP");
    REQUIRE(st.step());
    CHECK(st.column_text(0) == "2025-01-01 00:00:00");
    CHECK(st.column_text(1) == "2025-01-01 00:00:00");
}

TEST_CASE("snapshot digests track state") {
    TempDir tmp;
    auto p = provision(test::fixture_bundle(), "i0", opts_in(tmp));
    const auto s1 = snapshot(p.handle);
    const auto s2 = snapshot(p.handle);
    CHECK(s1.digest == s2.digest);
    CHECK(s1.snapshot_id != s2.snapshot_id);
    p.handle.db().exec("INSERT INTO members (id, name, email) VALUES (6, 'New', 'new@example.org')");
    const auto s3 = snapshot(p.handle);
    CHECK(s3.digest != s1.digest);
    CHECK(compute_digest(s1.path) == s1.digest);

    const auto reloaded = load_snapshot(s1.path);
    CHECK(reloaded.digest == s1.digest);
    CHECK(reloaded.lineage == s1.lineage);
}

TEST_CASE("provisioning is deterministic") {
    TempDir tmp;
    auto a = provision(test::fixture_bundle(), "a", opts_in(tmp));
    auto b = provision(test::fixture_bundle(), "b", opts_in(tmp));
    CHECK(snapshot(a.handle).digest == snapshot(b.handle).digest);
    CHECK(dump_tables(a.handle.db_path()) == dump_tables(b.handle.db_path()));

    ProvisionOptions later = opts_in(tmp);
    later.clock_epoch = kDefaultClockEpoch + 86400;
    auto c = provision(test::fixture_bundle(), "c", later);
    CHECK(snapshot(c.handle).digest == snapshot(a.handle).digest);  // seed carries explicit timestamps
}

TEST_CASE("reset restores the initial digest after tool calls") {
    TempDir tmp;
    const auto& bundle = test::fixture_bundle();
    auto p = provision(bundle, "i0", opts_in(tmp));
    const auto initial = snapshot(p.handle);
    const std::vector<ToolCall> calls = {
        {"borrow_book", {{"book_id", 1}}},
        {"borrow_book", {{"book_id", 9}, {"days", 7}}},
        {"return_book", {{"loan_id", 1}}},
        {"update_profile", {{"name", "Ada Lovelace"}}},
        {"return_book", {{"loan_id", 2}}},
    };
    for (const auto& c : calls) REQUIRE(execute_tool(bundle, p.handle, c).is_ok());
    const auto first_final = snapshot(p.handle);
    CHECK(first_final.digest != initial.digest);

    reset(p.handle, initial);
    CHECK(current_digest(p.handle) == initial.digest);
    reset(p.handle, initial);
    CHECK(snapshot(p.handle).digest == initial.digest);

    for (const auto& c : calls) REQUIRE(execute_tool(bundle, p.handle, c).is_ok());
    CHECK(snapshot(p.handle).digest == first_final.digest);
}

TEST_CASE("reset refuses snapshots from another lineage") {
    TempDir tmp;
    auto a = provision(test::fixture_bundle(), "a", opts_in(tmp));
    auto b = provision(test::fixture_bundle(), "b", opts_in(tmp));
    const auto sb = snapshot(b.handle);
    CHECK_THROWS_AS(reset(a.handle, sb), LineageMismatch);
}

TEST_CASE("diff reports inserts and column updates") {
    TempDir tmp;
    auto p = provision(test::fixture_bundle(), "i0", opts_in(tmp));
    const auto s0 = snapshot(p.handle);
    CHECK(diff(s0, snapshot(p.handle)).empty());

    p.handle.db().exec(
        "INSERT INTO loans (id, member_id, book_id, borrowed_at, due_at) VALUES (16, 2, 7, '2025-01-01 00:00:00', "
        "'2025-01-15 00:00:00')");
    const auto s1 = snapshot(p.handle);
    const auto d1 = diff(s0, s1);
    REQUIRE(d1.tables.size() == 1);
    const auto& loans = d1.tables.at("loans");
    REQUIRE(loans.added.size() == 1);
    CHECK(loans.added[0]["id"] == 16);
    CHECK(loans.added[0]["book_id"] == 7);
    CHECK(loans.removed.empty());
    CHECK(loans.modified.empty());
    CHECK(loans.key_columns == std::vector<std::string>{"id"});

    // independent session writes directly to the snapshot copy
    fs::copy_file(s0.path, tmp / "direct.db");
    {
        sqlite::Database direct(tmp / "direct.db", sqlite::Database::Mode::ReadWrite);
        direct.exec("UPDATE books SET copies_available = 7 WHERE id = 12");
    }
    const auto d2 = diff_databases(s0.path, tmp / "direct.db");
    REQUIRE(d2.tables.count("books"));
    const auto& books = d2.tables.at("books");
    REQUIRE(books.modified.size() == 1);
    CHECK(books.modified[0].key == Json{{"id", 12}});
    REQUIRE(books.modified[0].changes.size() == 1);
    CHECK(books.modified[0].changes[0] == ColumnChange{"copies_available", 2, 7});
}

TEST_CASE("tables without a primary key diff as multisets") {
    TempDir tmp;
    {
        sqlite::Database a(tmp / "a.db", sqlite::Database::Mode::Create);
        a.exec("CREATE TABLE tags (label TEXT, weight INTEGER); INSERT INTO tags VALUES ('x', 1), ('x', 1), ('y', 2)");
        sqlite::Database b(tmp / "b.db", sqlite::Database::Mode::Create);
        b.exec("CREATE TABLE tags (label TEXT, weight INTEGER); INSERT INTO tags VALUES ('x', 1), ('y', 2), ('z', 3)");
    }
    const auto d = diff_databases(tmp / "a.db", tmp / "b.db");
    const auto& t = d.tables.at("tags");
    CHECK(t.key_columns.empty());
    REQUIRE(t.removed.size() == 1);
    CHECK(t.removed[0] == Json{{"label", "x"}, {"weight", 1}});
    REQUIRE(t.added.size() == 1);
    CHECK(t.added[0] == Json{{"label", "z"}, {"weight", 3}});
    apply_diff(tmp / "a.db", d);
    CHECK(dump_tables(tmp / "a.db") == dump_tables(tmp / "b.db"));
}

TEST_CASE("diff across different schemas is refused") {
    TempDir tmp;
    {
        sqlite::Database a(tmp / "a.db", sqlite::Database::Mode::Create);
        a.exec("CREATE TABLE t (id INTEGER PRIMARY KEY)");
        sqlite::Database b(tmp / "b.db", sqlite::Database::Mode::Create);
        b.exec("CREATE TABLE t (id INTEGER PRIMARY KEY, extra TEXT)");
    }
    CHECK_THROWS_AS(diff_databases(tmp / "a.db", tmp / "b.db"), SchemaMismatch);
}

TEST_CASE("property: applying diff(init, fin) to init reproduces fin") {
    TempDir tmp;
    std::mt19937 rng(7);
    auto p = provision(test::fixture_bundle(), "i0", opts_in(tmp));
    const auto init = snapshot(p.handle);
    for (int round = 0; round < 25; ++round) {
        reset(p.handle, init);
        auto& db = p.handle.db();
        const int writes = 1 + static_cast<int>(rng() % 6);
        for (int w = 0; w < writes; ++w) {
            const int book = 1 + static_cast<int>(rng() % 20);
            switch (rng() % 4) {
                case 0:
                    db.exec("INSERT INTO loans (member_id, book_id, due_at) VALUES (" + std::to_string(1 + rng() % 5) +
                            ", " + std::to_string(book) + ", '2025-02-01 00:00:00')");
                    break;
                case 1: db.exec("DELETE FROM loans WHERE id = " + std::to_string(1 + rng() % 15)); break;
                case 2:
                    db.exec("UPDATE books SET copies_available = " + std::to_string(rng() % 5) +
                            ", title = title || '!' WHERE id = " + std::to_string(book));
                    break;
                default:
                    db.exec("UPDATE members SET tier = 'gold', name = name || '*' WHERE id = " +
                            std::to_string(1 + rng() % 5));
            }
        }
        const auto fin = snapshot(p.handle);
        const auto d = diff(init, fin);
        const auto work = tmp / ("work" + std::to_string(round) + ".db");
        fs::copy_file(init.path, work);
        apply_diff(work, d);
        CHECK(dump_tables(work) == dump_tables(fin.path));
        CHECK(diff_databases(work, fin.path).empty());
    }
}

TEST_CASE("isolation: concurrent writers never disturb each other") {
    TempDir tmp;
    const auto& bundle = test::fixture_bundle();
    constexpr int kInstances = 4;
    std::vector<StateHandle> handles;
    std::vector<std::string> initial;
    for (int i = 0; i < kInstances; ++i) {
        handles.push_back(provision(bundle, "iso" + std::to_string(i), opts_in(tmp)).handle);
        initial.push_back(current_digest(handles.back()));
    }
    // instance 0 stays idle; the others mutate concurrently
    std::vector<std::thread> threads;
    for (int i = 1; i < kInstances; ++i) {
        threads.emplace_back([&, i] {
            for (int k = 0; k < 10; ++k) {
                execute_tool(bundle, handles[i], {"borrow_book", {{"book_id", 1 + (i + k) % 12}}});
                execute_tool(bundle, handles[i], {"update_profile", {{"name", "n" + std::to_string(i * 100 + k)}}});
            }
        });
    }
    for (int k = 0; k < 20; ++k) CHECK(current_digest(handles[0]) == initial[0]);
    for (auto& t : threads) t.join();
    CHECK(current_digest(handles[0]) == initial[0]);
    for (int i = 1; i < kInstances; ++i) CHECK(current_digest(handles[i]) != initial[i]);
    CHECK(current_digest(handles[1]) != current_digest(handles[2]));
}

TEST_CASE("clones start from the template snapshot with their own lineage") {
    TempDir tmp;
    auto p = provision(test::fixture_bundle(), "tpl", opts_in(tmp));
    const auto tpl = snapshot(p.handle);
    auto c = clone_instance(tpl, "clone", tmp.path());
    CHECK(current_digest(c) == tpl.digest);
    CHECK(c.lineage() != p.handle.lineage());
    CHECK_THROWS_AS(reset(c, tpl), LineageMismatch);
}
