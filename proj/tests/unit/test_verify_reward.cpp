#include <doctest.h>

#include <httplib.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "awm/errors.hpp"
#include "awm/reward.hpp"
#include "awm/sqlite.hpp"
#include "awm/verification.hpp"
#include "support.hpp"

using namespace awm;
using awm::test::TempDir;

namespace {

struct Episode {
    TempDir tmp;
    Provisioned env;
    Snapshot initial;
    Snapshot final;

    explicit Episode(const std::vector<ToolCall>& calls) : env(make()) {
        initial = snapshot(env.handle, tmp / "snaps-initial");
        for (const auto& c : calls) execute_tool(test::fixture_bundle(), env.handle, c);
        final = snapshot(env.handle, tmp / "snaps-final");
    }

    Provisioned make() {
        ProvisionOptions po;
        po.root = tmp.path();
        return provision(test::fixture_bundle(), "verify", po);
    }
};

std::vector<ToolCall> golden_calls(const std::string& task) {
    std::vector<ToolCall> out;
    for (const auto& c : test::fixture_bundle().golden.at(task).calls) out.push_back({c.tool, c.arguments});
    return out;
}

const VerificationSpec& spec_for(const std::string& task) {
    const auto& b = test::fixture_bundle();
    return *b.verification_for(*b.find_task(task));
}

std::int64_t count_rows(const std::filesystem::path& db, const std::string& sql) {
    sqlite::Database d(db, sqlite::Database::Mode::ReadOnly);
    auto st = d.prepare(sql);
    st.step();
    return st.column_int64(0);
}

Termination answered(std::size_t step) { return {TerminationKind::Answered, step}; }

Classification classify(const SignalReport& r, Termination t) {
    JudgeInput in;
    in.report = &r;
    in.termination = t;
    return judge(in);
}

}  // namespace

TEST_CASE("golden run satisfies the required signal, confirmed by a direct query") {
    Episode ep(golden_calls("borrow-left-hand"));
    const auto report = run_verification(spec_for("borrow-left-hand"), ep.initial, ep.final);
    const std::string target =
        "SELECT COUNT(*) FROM loans WHERE member_id = 1 AND book_id = 9 AND returned_at IS NULL "
        "AND due_at = '2025-01-22 00:00:00'";
    const bool oracle = count_rows(ep.final.path, target) == 1 && count_rows(ep.initial.path, target) == 0;
    CHECK(oracle);
    CHECK(report.signals.at("target_loan_created").satisfied == oracle);
    CHECK(report.signals.at("target_loan_created").value.size() == 1);
    CHECK(report.signals.at("loan_count_delta").value == 1);
    CHECK(report.signals.at("other_book_borrowed").satisfied);
    CHECK(report.all_required_satisfied());
    CHECK(classify(report, answered(4)).category == Category::Completed);
}

TEST_CASE("no-op run: every delta is zero and the task is not completed") {
    Episode ep({{"search_books", {{"query", "Left Hand"}}}});
    CHECK(ep.initial.digest == ep.final.digest);
    const auto report = run_verification(spec_for("borrow-left-hand"), ep.initial, ep.final);
    CHECK(report.signals.at("loan_count_delta").value == 0);
    CHECK(report.signals.at("target_loan_created").value.empty());
    CHECK_FALSE(report.all_required_satisfied());
    const auto c = classify(report, answered(3));
    CHECK(c.category == Category::PartiallyCompleted);
    CHECK(reward_of(c.category) == 0.1);
}

TEST_CASE("every fixture task: golden completes, verification leaves snapshots intact") {
    for (const auto& task : test::fixture_bundle().tasks) {
        Episode ep(golden_calls(task.id));
        const auto before = std::make_pair(compute_digest(ep.initial.path), compute_digest(ep.final.path));
        const auto report = run_verification(spec_for(task.id), ep.initial, ep.final);
        CHECK_MESSAGE(classify(report, answered(5)).category == Category::Completed, task.id);
        CHECK(compute_digest(ep.initial.path) == before.first);
        CHECK(compute_digest(ep.final.path) == before.second);
        CHECK(before.first == ep.initial.digest);
    }
}

TEST_CASE("wrong entity mutation is an agent error") {
    // returns loan 1 instead of loan 3
    Episode ep({{"return_book", {{"loan_id", 1}}}});
    const auto report = run_verification(spec_for("return-earthsea"), ep.initial, ep.final);
    CHECK_FALSE(report.signals.at("earthsea_closed").satisfied);
    CHECK(report.violated_guards() == std::vector<std::string>{"other_loans_closed"});
    const auto c = classify(report, answered(3));
    CHECK(c.category == Category::AgentError);
    CHECK(reward_of(c.category) == 0.0);
}

TEST_CASE("probe failures are contained") {
    Episode ep(golden_calls("change-email"));
    auto spec = spec_for("change-email");
    spec.probes.push_back({"ghost", ProbeTarget::Final, "SELECT id FROM dropped_table", {}});
    spec.probes.push_back({"bad_projection", ProbeTarget::Final, "SELECT id FROM members", {"nope"}});
    spec.signals.push_back({"ghost_exists", SignalRule::Exists, "ghost", "", {}, nullptr, std::nullopt, false, false});
    const auto report = run_verification(spec, ep.initial, ep.final);
    CHECK_FALSE(report.probes.at("ghost").ok);
    CHECK_FALSE(report.probes.at("ghost").infrastructure);
    CHECK_FALSE(report.probes.at("bad_projection").ok);
    CHECK(report.probes.at("email_after").ok);
    CHECK_FALSE(report.signals.at("ghost_exists").evaluated);
    CHECK(report.signals.at("email_updated").satisfied);
    CHECK(report.to_json()["probes"]["ghost"]["status"] == "error");
    CHECK(classify(report, answered(3)).category == Category::Completed);
}

TEST_CASE("unreadable snapshots are infrastructure failures") {
    Episode ep(golden_calls("change-email"));
    const auto report = run_verification(spec_for("change-email"), ep.initial.path, ep.tmp / "missing.db");
    CHECK(report.infrastructure_failure());
    CHECK(report.probes.at("others_before").ok);
    CHECK(classify(report, answered(3)).category == Category::EnvironmentError);
}

TEST_CASE("judge priority order") {
    Episode ep(golden_calls("change-email"));
    const auto good = run_verification(spec_for("change-email"), ep.initial, ep.final);
    CHECK(classify(good, answered(2)).category == Category::Completed);
    CHECK(classify(good, {TerminationKind::EnvironmentError, 2}).category == Category::EnvironmentError);
    CHECK(classify(good, {TerminationKind::FormatError, 2}).category == Category::AgentError);
    CHECK(classify(good, {TerminationKind::TurnCap, 20}).category == Category::PartiallyCompleted);

    // completed outranks a violated guard
    Episode both({{"update_profile", {{"email", "ada.new@example.org"}}}});
    auto spec = spec_for("change-email");
    spec.signals[1].expect = Expectation{"nonempty", nullptr};
    const auto r = run_verification(spec, both.initial, both.final);
    CHECK_FALSE(r.violated_guards().empty());
    CHECK(classify(r, answered(2)).category == Category::Completed);
    CHECK(classify(r, {TerminationKind::TurnCap, 20}).category == Category::AgentError);
    // environment error outranks agent error
    CHECK(classify(r, {TerminationKind::EnvironmentError, 3}).category == Category::EnvironmentError);
}

TEST_CASE("expectations") {
    CHECK(expectation_holds(Expectation{"eq", 3}, 3));
    CHECK(expectation_holds(Expectation{"eq", 3}, 3.0));
    CHECK(expectation_holds(Expectation{"ne", 3}, 4));
    CHECK(expectation_holds(Expectation{"ge", 1}, 1));
    CHECK_FALSE(expectation_holds(Expectation{"ge", 1}, 0));
    CHECK(expectation_holds(Expectation{"le", 1}, -2));
    CHECK_FALSE(expectation_holds(Expectation{"le", 1}, "a"));
    CHECK(expectation_holds(Expectation{"empty", nullptr}, Json::array()));
    CHECK(expectation_holds(Expectation{"nonempty", nullptr}, Json::array({1})));
    CHECK(expectation_holds(Expectation{"count", 2}, Json::array({1, 2})));
    CHECK_FALSE(expectation_holds(Expectation{"count", 2}, 2));
    CHECK_FALSE(expectation_holds(Expectation{"between", 2}, 2));
    CHECK(expectation_holds(std::nullopt, true));
    CHECK_FALSE(expectation_holds(std::nullopt, 0));
}

TEST_CASE("category names") {
    CHECK(category_from("Partially Completed") == Category::PartiallyCompleted);
    CHECK(category_from("environment_error") == Category::EnvironmentError);
    CHECK(category_from(to_string(Category::AgentError)) == Category::AgentError);
    CHECK_THROWS_AS(category_from("Great"), ParseError);
}

TEST_CASE("external judge over HTTP") {
    httplib::Server srv;
    Json seen;
    srv.Post("/judge", [&](const httplib::Request& req, httplib::Response& res) {
        seen = Json::parse(req.body);
        res.set_content(R"({"reasoning":"db agrees","confidence_score":{"Completed":0.9},)"
                        R"("classification":"Partially Completed","evidence":["row 3"]})",
                        "application/json");
    });
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread t([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();

    Episode ep(golden_calls("change-email"));
    const auto report = run_verification(spec_for("change-email"), ep.initial, ep.final);
    const auto& b = test::fixture_bundle();
    JudgeInput in;
    in.task = b.find_task("change-email");
    in.report = &report;
    in.termination = answered(3);
    in.success_criteria = spec_for("change-email").success_criteria;
    in.failure_criteria = spec_for("change-email").failure_criteria;
    HttpJudge judge_backend("127.0.0.1", port);
    const auto c = judge_backend.classify(in);
    srv.stop();
    t.join();

    CHECK(c.category == Category::PartiallyCompleted);
    CHECK(c.reasoning == "db agrees");
    CHECK(c.evidence == std::vector<std::string>{"row 3"});
    CHECK(c.confidence_score["Completed"] == 0.9);
    for (const auto* key : {"task", "trajectory", "verification_report", "success_criteria", "failure_criteria"})
        CHECK_MESSAGE(seen.contains(key), key);
    CHECK(seen["task"]["id"] == "change-email");

    HttpJudge dead("127.0.0.1", port);
    CHECK_THROWS_AS(dead.classify(in), JudgeBackendUnavailable);
    CHECK_THROWS_AS(HttpJudge::parse_response(Json{{"reasoning", "x"}}), JudgeBackendUnavailable);
}

// rewards

TEST_CASE("task reward per category") {
    CHECK(reward_of(Category::Completed) == 1.0);
    CHECK(reward_of(Category::PartiallyCompleted) == 0.1);
    CHECK(reward_of(Category::AgentError) == 0.0);
    CHECK(reward_of(Category::EnvironmentError) == 0.0);
}

namespace {

Trajectory steps_of(std::size_t n) {
    Trajectory t;
    for (std::size_t i = 1; i <= n; ++i) {
        TrajectoryStep s;
        s.index = i;
        s.reasoning = "r" + std::to_string(i);
        s.action = i == 1 ? Action::list_tools() : i == n ? Action::answer("a") : Action::call("get_book", Json{{"book_id", 1}});
        if (s.action.kind != ActionKind::FinalAnswer) s.observation = ToolResult::ok(Json{{"i", i}});
        t.steps.push_back(s);
    }
    t.instruction = "do it";
    return t;
}

}  // namespace

TEST_CASE("step rewards") {
    const auto t = steps_of(5);
    CHECK(step_rewards(t, answered(5), 1.0) == std::vector<double>{1, 1, 1, 1, 1});
    CHECK(step_rewards(t, {TerminationKind::FormatError, 3}, 1.0) == std::vector<double>{0, 0, -1});
    CHECK(step_rewards(t, {TerminationKind::EnvironmentError, 4}, 1.0) == std::vector<double>{0, 0, 0, 0});
    CHECK(step_rewards(t, {TerminationKind::TurnCap, 5}, 0.1) == std::vector<double>(5, 0.1));
    StepRewardOptions skip;
    skip.reward_list_tools = false;
    CHECK(step_rewards(t, answered(5), 1.0, skip) == std::vector<double>{0, 1, 1, 1, 1});
}

TEST_CASE("group advantages") {
    CHECK(group_advantages({1, 1, 1, 1}) == std::vector<double>{0, 0, 0, 0});
    CHECK(group_advantages({1.0, 0.0}) == std::vector<double>{1.0, -1.0});
    CHECK(group_advantages({0.5}) == std::vector<double>{0});

    const std::vector<double> r = {1.0, 0.1, 0.0, 0.0};
    const double mean = 1.1 / 4;
    double ss = 0;
    for (double x : r) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / 4);
    const auto a = group_advantages(r);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(a[i] - (r[i] - mean) / sd) < 1e-9);
}

TEST_CASE("property: advantages sum to zero and preserve reward order") {
    std::mt19937 rng(99);
    std::uniform_int_distribution<int> size(1, 16);
    const std::vector<double> levels = {0.0, 0.1, 1.0};
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<double> r(size(rng));
        for (auto& x : r) x = levels[rng() % 3];
        const auto a = group_advantages(r);
        CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0)) <= 1e-9);
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = 0; j < r.size(); ++j)
                if (r[i] < r[j]) CHECK(a[i] < a[j]);
    }
}

TEST_CASE("split_history windows") {
    const auto t5 = steps_of(5);
    const auto s = split_history(t5, 3);
    REQUIRE(s.size() == 5);
    CHECK(s[4].context_turns == std::vector<std::size_t>{1, 2, 3, 4});
    CHECK(s[0].context_turns.empty());
    CHECK(s[0].messages.size() == 3);  // system, user, target

    const auto t3 = split_history(steps_of(3), 10);
    CHECK(t3[2].context_turns == std::vector<std::size_t>{1, 2});

    const auto t8 = split_history(steps_of(8), 3);
    CHECK(t8[7].context_turns == std::vector<std::size_t>{1, 5, 6, 7});
    const auto& m = t8[7].messages;
    CHECK(m[0].role == "system");
    CHECK(m[0].content == agent_system_prompt());
    CHECK(m[1].content == "do it");
    CHECK(m[2].turn == 1);
    CHECK(m[3].role == "tool");
    CHECK(m.back().turn == 8);
    CHECK(m.back().content == render_assistant(steps_of(8).steps[7]));
    CHECK(std::count(t8[7].loss_mask.begin(), t8[7].loss_mask.end(), true) == 1);
    CHECK(t8[7].loss_mask.back());
    CHECK(t8[7].to_json()["messages"].size() == m.size());
}
