#include <doctest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "awm/bundle.hpp"
#include "awm/errors.hpp"
#include "awm/sql_text.hpp"
#include "support.hpp"

using namespace awm;
using awm::test::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_matches(const std::string& text, const std::regex& re) {
    return static_cast<std::size_t>(std::distance(std::sregex_iterator(text.begin(), text.end(), re), std::sregex_iterator()));
}

void copy_fixture(const fs::path& to) {
    fs::copy(test::fixture_dir(), to, fs::copy_options::recursive);
}

}  // namespace

TEST_CASE("fixture counts agree with a line-level scan of the files") {
    const auto dir = test::fixture_dir();
    const auto tables = count_matches(slurp(dir / "schema.sql"), std::regex(R"(^CREATE TABLE )", std::regex::multiline));
    const auto inserts = count_matches(slurp(dir / "seed.sql"), std::regex(R"(^INSERT INTO )", std::regex::multiline));
    const auto tools = count_matches(slurp(dir / "toolset.json"), std::regex(R"("plan":)"));
    const auto tasks = count_matches(slurp(dir / "tasks.json"), std::regex(R"("verification_ref":)"));

    const auto& b = test::fixture_bundle();
    CHECK(tables == 3);
    CHECK(tools == 6);
    CHECK(tasks == 4);
    CHECK(b.schema.tables.size() == tables);
    CHECK(b.toolset.size() == tools);
    CHECK(b.tasks.size() == tasks);
    CHECK(b.seed.statement_count() == inserts);
    CHECK(b.verifications.size() == 4);
    CHECK(b.golden.size() == 4);
}

TEST_CASE("missing toolset file is reported by name") {
    TempDir tmp;
    const auto dir = tmp / "b";
    copy_fixture(dir);
    fs::remove(dir / "toolset.json");
    try {
        load_bundle(dir);
        FAIL("expected MissingFile");
    } catch (const MissingFile& e) {
        CHECK(e.name() == "toolset");
    }
}

TEST_CASE("dangling verification reference is a cross-reference error") {
    TempDir tmp;
    const auto dir = tmp / "b";
    copy_fixture(dir);
    auto tasks = Json::parse(slurp(dir / "tasks.json"));
    tasks[0]["verification_ref"] = "v99";
    write_text_file(dir / "tasks.json", tasks.dump(2));
    CHECK_THROWS_AS(load_bundle(dir), CrossRefError);
}

TEST_CASE("malformed JSON reports file and position") {
    TempDir tmp;
    const auto dir = tmp / "b";
    copy_fixture(dir);
    write_text_file(dir / "tasks.json", "[{\"id\": \"x\", \"instruction\": 3, \"verification_ref\": \"v\"}]");
    try {
        load_bundle(dir);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.file() == "tasks");
        CHECK(e.position() == "/0/instruction");
    }
}

TEST_CASE("unmodified fixture validates cleanly") {
    const auto report = validate_bundle(test::fixture_bundle());
    for (const auto& v : report.violations) MESSAGE(v.code << " " << v.location << " " << v.message);
    CHECK(report.empty());
}

TEST_CASE("plan referencing an unknown table is flagged") {
    auto b = test::fixture_bundle();
    b.toolset[0].plan[0].sql = "SELECT id FROM ghosts";
    b.toolset[0].response.clear();
    const auto report = validate_bundle(b);
    CHECK(report.has("ToolPlanTableUnknown"));
}

TEST_CASE("authentication columns are forbidden") {
    auto b = test::fixture_bundle();
    b.schema.tables[0].ddl =
        "CREATE TABLE members (id INTEGER PRIMARY KEY, name TEXT NOT NULL, email TEXT NOT NULL UNIQUE, "
        "tier TEXT NOT NULL DEFAULT 'standard', joined_at TEXT NOT NULL DEFAULT CURRENT_TIMESTAMP, password_hash TEXT)";
    CHECK(validate_bundle(b).has("AuthFieldForbidden"));

    CHECK(is_auth_column("password_hash", {"password", "token", "session", "salt"}));
    CHECK(is_auth_column("api_tokens", {"password", "token", "session", "salt"}));
    CHECK_FALSE(is_auth_column("salted_caramel", {"salt"}));
    CHECK_FALSE(is_auth_column("tokenizer_name", {"token"}));
}

TEST_CASE("tasks mentioning authentication are flagged") {
    auto b = test::fixture_bundle();
    b.tasks[0].instruction = "Reset my password and then borrow Dune.";
    CHECK(validate_bundle(b).has("TaskMentionsAuth"));
    CHECK_FALSE(mentions_authentication("Borrow a book about login culture history? no", {"password"}));
}

TEST_CASE("probe write verbs are detected by tokens, not substrings") {
    auto b = test::fixture_bundle();
    auto& spec = b.verifications.begin()->second;
    spec.probes[0].query = "SELECT 'DELETE FROM loans' AS note, id AS updated_at FROM loans";
    spec.probes[0].projection.clear();
    CHECK_FALSE(validate_bundle(b).has("ProbeNotReadOnly"));

    spec.probes[0].query = "DELETE FROM loans";
    CHECK(validate_bundle(b).has("ProbeNotReadOnly"));

    CHECK(sql::find_write_verb("update loans set returned_at = NULL") == std::optional<std::string>("UPDATE"));
    CHECK_FALSE(sql::find_write_verb("SELECT \"insert\" FROM t -- DROP TABLE t").has_value());
}

TEST_CASE("signals must reference declared probes") {
    auto b = test::fixture_bundle();
    auto& spec = b.verifications.begin()->second;
    spec.signals[0].left = "nope";
    CHECK(validate_bundle(b).has("SignalProbeUnknown"));
}

TEST_CASE("unresolved plan bindings are flagged") {
    auto b = test::fixture_bundle();
    b.toolset[1].plan[0].sql = "SELECT id, title, author, genre, copies_available, is_reference FROM books WHERE id = :bookid";
    CHECK(validate_bundle(b).has("UnresolvedBinding"));
}

TEST_CASE("response mapping may only name produced columns") {
    auto b = test::fixture_bundle();
    b.toolset[1].response[0].columns.push_back({"isbn", SemanticType::Text});
    CHECK(validate_bundle(b).has("ResponseColumnUnknown"));
}

TEST_CASE("duplicate tool and param names are flagged") {
    auto b = test::fixture_bundle();
    b.toolset.push_back(b.toolset[0]);
    CHECK(validate_bundle(b).has("DuplicateTool"));
    auto c = test::fixture_bundle();
    c.toolset[0].params.push_back(c.toolset[0].params[0]);
    CHECK(validate_bundle(c).has("DuplicateParam"));
}

TEST_CASE("seed order must respect foreign keys") {
    auto b = test::fixture_bundle();
    std::swap(b.seed.tables[0], b.seed.tables[2]);
    CHECK(validate_bundle(b).has("SeedOrderViolatesForeignKeys"));
}

TEST_CASE("validation is deterministic") {
    auto b = test::fixture_bundle();
    b.toolset[0].summary = std::string(120, 'x');
    b.schema.tables[0].ddl += ", broken";
    const auto r1 = validate_bundle(b);
    const auto r2 = validate_bundle(b);
    CHECK(r1.violations == r2.violations);
    CHECK(r1.has("SummaryTooLong"));
    CHECK(r1.has("DdlInvalid"));
}

TEST_CASE("save then load is the identity and re-saving is byte-identical") {
    TempDir tmp;
    const auto& b = test::fixture_bundle();
    save_bundle(b, tmp / "one");
    const auto loaded = load_bundle(tmp / "one");
    CHECK(loaded == b);
    save_bundle(loaded, tmp / "two");
    for (const auto& entry : fs::recursive_directory_iterator(tmp / "one")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), tmp / "one");
        CHECK_MESSAGE(slurp(entry.path()) == slurp(tmp / "two" / rel), rel.string());
    }
    CHECK(bundle_digest(loaded) == bundle_digest(b));
}

TEST_CASE("canonical files use sorted keys and LF endings") {
    TempDir tmp;
    save_bundle(test::fixture_bundle(), tmp.path());
    const auto text = slurp(tmp / "manifest.json");
    CHECK(text.find('\r') == std::string::npos);
    CHECK(text.find("\"format_version\"") < text.find("\"scenario\""));
    CHECK(text.back() == '\n');
}

TEST_CASE("schema text round trip keeps indexes with their table") {
    const auto& schema = test::fixture_bundle().schema;
    CHECK(schema.tables[1].indexes.size() == 1);
    CHECK(parse_schema(schema_text(schema)) == schema);
}

TEST_CASE("seed directives group statements by table") {
    const auto seed = parse_seed(
        "-- @table a\n-- @rationale why not\nINSERT INTO a VALUES (1);\nINSERT INTO a VALUES (2);\n"
        "-- @table b\nINSERT INTO b VALUES ('x;y');\n");
    REQUIRE(seed.tables.size() == 2);
    CHECK(seed.tables[0].rationale == "why not");
    CHECK(seed.tables[0].statements.size() == 2);
    CHECK(seed.tables[1].table == "b");
    CHECK(seed.tables[1].statements[0] == "INSERT INTO b VALUES ('x;y')");
    CHECK(parse_seed(seed_text(seed)) == seed);

    const auto implicit = parse_seed("INSERT INTO a VALUES (1);\nINSERT INTO b VALUES (2);\n");
    REQUIRE(implicit.tables.size() == 2);
    CHECK(implicit.tables[1].table == "b");
}

TEST_CASE("category registry can be replaced at runtime") {
    TempDir tmp;
    write_text_file(tmp / "cats.txt", "lending\n\nmuseums\n");
    ValidationOptions opts;
    opts.load_categories(tmp / "cats.txt");
    auto b = test::fixture_bundle();
    CHECK(validate_bundle(b, opts).empty());
    b.manifest.scenario.category = "commerce";
    CHECK(validate_bundle(b, opts).has("CategoryUnknown"));
}
