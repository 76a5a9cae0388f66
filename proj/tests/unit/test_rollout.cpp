#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "awm/errors.hpp"
#include "awm/reward.hpp"
#include "awm/rollout.hpp"
#include "awm/synth.hpp"
#include "support.hpp"

using namespace awm;
using awm::test::TempDir;

namespace {

BundlePtr fixture_ptr() { return std::make_shared<const EnvironmentBundle>(test::fixture_bundle()); }

std::unique_ptr<InstancePool> pool_of(const TempDir& tmp, std::size_t n, BundlePtr b = fixture_ptr()) {
    PoolOptions o;
    o.root = tmp / "pool";
    return spawn_pool({std::move(b)}, n, o);
}

struct Run {
    Episode episode;
    EpisodeOutcome outcome;
};

Run run_one(Instance& inst, const std::string& task_id, const Policy& policy, const TempDir& tmp,
            RolloutConfig config = {}) {
    const auto* task = inst.bundle().find_task(task_id);
    REQUIRE(task);
    EpisodeOptions eo;
    eo.snapshot_dir = tmp / ("episode-" + policy.kind());
    Run r;
    r.episode = run_episode(inst, *task, policy, config, eo);
    r.outcome = evaluate_episode(inst.bundle(), *task, r.episode);
    return r;
}

// Lists tools, then keeps reading forever.
class Looping : public Policy {
public:
    std::string kind() const override { return "looping"; }
    std::optional<TrajectoryStep> step(std::size_t turn, const std::vector<TrajectoryStep>& window) const override {
        seen.push_back(window.size());
        TrajectoryStep s;
        s.reasoning = "Looking again.";
        s.action = turn == 1 ? Action::list_tools() : Action::call("list_my_loans", Json::object());
        return s;
    }
    mutable std::vector<std::size_t> seen;
};

}  // namespace

TEST_CASE("golden policy completes every fixture task with reward 1") {
    TempDir tmp;
    auto pool = pool_of(tmp, 1);
    auto inst = pool->live().front();
    for (const auto& task : inst->bundle().tasks) {
        const auto policy = golden_policy(inst->bundle(), task.id);
        const auto r = run_one(*inst, task.id, *policy, tmp);
        CHECK(r.episode.trajectory.termination.kind == TerminationKind::Answered);
        CHECK(r.outcome.classification.category == Category::Completed);
        CHECK(r.outcome.reward == 1.0);
        CHECK(r.outcome.step_rewards == std::vector<double>(r.episode.trajectory.steps.size(), 1.0));
        inst->reset();
    }
}

TEST_CASE("noop policy leaves the state untouched and is not completed") {
    TempDir tmp;
    auto pool = pool_of(tmp, 1);
    auto inst = pool->live().front();
    const auto policy = noop_policy(inst->bundle());
    for (const auto& task : inst->bundle().tasks) {
        const auto r = run_one(*inst, task.id, *policy, tmp);
        CHECK(r.episode.initial.digest == r.episode.final.digest);
        CHECK(r.outcome.classification.category != Category::Completed);
        CHECK(r.outcome.reward < 1.0);
    }
}

TEST_CASE("malformed policies terminate early with -1 on the offending step") {
    TempDir tmp;
    auto pool = pool_of(tmp, 1);
    auto inst = pool->live().front();
    const std::string task_id = "borrow-left-hand";
    for (int rule = 1; rule <= 5; ++rule) {
        for (std::size_t at : {1u, 2u, 3u}) {
            CAPTURE(rule);
            CAPTURE(at);
            const auto policy = malformed_policy(inst->bundle(), task_id, rule, at);
            const auto r = run_one(*inst, task_id, *policy, tmp);
            const auto& term = r.episode.trajectory.termination;
            CHECK(term.kind == TerminationKind::FormatError);
            REQUIRE(r.episode.verdicts.size() >= term.step);
            CHECK(r.episode.verdicts[term.step - 1].rule == rule);
            CHECK(r.episode.trajectory.steps.size() == term.step);
            CHECK(term.step <= (rule == 5 ? 2u : at));
            REQUIRE(!r.outcome.step_rewards.empty());
            CHECK(r.outcome.step_rewards.back() == -1.0);
            CHECK(std::accumulate(r.outcome.step_rewards.begin(), r.outcome.step_rewards.end(), 0.0) == -1.0);
            inst->reset();
        }
    }
}

TEST_CASE("policy specs parse") {
    const auto& b = test::fixture_bundle();
    CHECK(make_policy("golden", b, "change-email")->kind() == "golden");
    CHECK(make_policy("noop", b, "change-email")->kind() == "noop");
    CHECK(make_policy("malformed:3@2", b, "change-email")->kind() == "malformed:3@2");
    CHECK(make_policy("malformed:2", b, "change-email")->kind() == "malformed:2@2");
    CHECK_THROWS_AS(make_policy("malformed:x", b, "change-email"), Error);
    CHECK_THROWS_AS(make_policy("malformed:9", b, "change-email"), Error);
    CHECK_THROWS_AS(make_policy("random", b, "change-email"), Error);
    CHECK_THROWS_AS(golden_policy(b, "no-such-task"), CrossRefError);
}

TEST_CASE("group of two golden and two noop episodes") {
    TempDir tmp;
    auto pool = pool_of(tmp, 4);
    const auto& b = test::fixture_bundle();
    const std::string task_id = "return-earthsea";
    const std::vector<PolicyPtr> policies{golden_policy(b, task_id), golden_policy(b, task_id), noop_policy(b),
                                          noop_policy(b)};
    RolloutConfig cfg;
    cfg.group_size = 4;
    const auto run_dir = new_run_dir(tmp / "runs");
    const auto g = run_group(*pool, task_id, policies, cfg, run_dir);
    REQUIRE(g.rewards.size() == 4);
    CHECK(g.rewards[0] == 1.0);
    CHECK(g.rewards[1] == 1.0);
    for (int i : {2, 3}) CHECK((g.rewards[i] == 0.0 || g.rewards[i] == 0.1));
    CHECK(std::fabs(std::accumulate(g.advantages.begin(), g.advantages.end(), 0.0)) < 1e-9);
    CHECK(g.advantages[0] > 0);
    CHECK(g.advantages[3] < 0);
    CHECK(std::filesystem::exists(run_dir / "group.json"));
    for (int i = 0; i < 4; ++i) {
        const auto dir = run_dir / ("episode-" + std::to_string(i));
        CHECK(std::filesystem::exists(dir / "trajectory.jsonl"));
        CHECK(std::filesystem::exists(dir / "outcome.json"));
    }
    // released instances are back at their initial state
    for (const auto& inst : pool->live()) CHECK(current_digest(inst->handle()) == inst->initial().digest);
}

TEST_CASE("group size one has zero advantage and oversized groups are refused") {
    TempDir tmp;
    auto pool = pool_of(tmp, 2);
    const auto& b = test::fixture_bundle();
    const auto g = run_group(*pool, "change-email", {golden_policy(b, "change-email")}, {}, tmp / "run-1");
    CHECK(g.advantages == std::vector<double>{0.0});
    std::vector<PolicyPtr> four(4, golden_policy(b, "change-email"));
    CHECK_THROWS_AS(run_group(*pool, "change-email", four, {}, tmp / "run-2"), CapacityError);
}

TEST_CASE("replaying a recorded trajectory reaches the same final digest") {
    TempDir tmp;
    auto pool = pool_of(tmp, 2);
    auto a = pool->live()[0];
    auto b = pool->live()[1];
    const std::string task_id = "borrow-left-hand";
    const auto first = run_one(*a, task_id, *golden_policy(a->bundle(), task_id), tmp);
    save_trajectory(first.episode.trajectory, tmp / "recorded.jsonl");
    const auto replay = make_policy("replay:" + (tmp / "recorded.jsonl").string(), b->bundle(), task_id);
    TempDir other;
    const auto second = run_one(*b, task_id, *replay, other);
    CHECK(second.episode.final.digest == first.episode.final.digest);
    CHECK(second.episode.final.digest != second.episode.initial.digest);
    CHECK(second.episode.trajectory.steps == first.episode.trajectory.steps);
}

TEST_CASE("no episode exceeds the turn budget and the window is bounded") {
    TempDir tmp;
    auto pool = pool_of(tmp, 1);
    auto inst = pool->live().front();
    for (std::size_t max_turns : {1u, 2u, 5u, 9u}) {
        Looping policy;
        RolloutConfig cfg;
        cfg.max_turns = max_turns;
        cfg.window = 3;
        const auto r = run_one(*inst, "change-email", policy, tmp, cfg);
        CHECK(r.episode.trajectory.steps.size() <= max_turns);
        CHECK(r.episode.trajectory.termination.kind != TerminationKind::Answered);
        for (auto w : policy.seen) CHECK(w <= 3u);
        CHECK(r.outcome.reward < 1.0);
        inst->reset();
    }
    RolloutConfig bad;
    bad.window = 0;
    CHECK_THROWS_AS(bad.check(), Error);
}

TEST_CASE("an instance killed mid-episode yields an environment error") {
    TempDir tmp;
    auto pool = pool_of(tmp, 1);
    auto inst = pool->live().front();
    const std::string task_id = "borrow-left-hand";
    const auto* task = inst->bundle().find_task(task_id);
    EpisodeOptions eo;
    eo.snapshot_dir = tmp / "killed";
    eo.kill_before_turn = 2;
    const auto ep = run_episode(*inst, *task, *golden_policy(inst->bundle(), task_id), {}, eo);
    CHECK(ep.trajectory.termination.kind == TerminationKind::EnvironmentError);
    CHECK(ep.trajectory.termination.step == 2);
    const auto out = evaluate_episode(inst->bundle(), *task, ep);
    CHECK(out.reward == 0.0);
    CHECK(out.step_rewards == std::vector<double>{0.0, 0.0});

    EpisodeOptions again;
    again.snapshot_dir = tmp / "again";
    CHECK_THROWS_AS(run_episode(*inst, *task, *golden_policy(inst->bundle(), task_id), {}, again),
                    InstanceUnavailable);
}

TEST_CASE("episode snapshots stay readable after the instance is recycled") {
    TempDir tmp;
    auto pool = pool_of(tmp, 1);
    auto inst = pool->live().front();
    const std::string task_id = "change-email";
    const auto r = run_one(*inst, task_id, *golden_policy(inst->bundle(), task_id), tmp);
    const auto id = inst->id();
    inst.reset();
    pool->recycle(id);
    CHECK(compute_digest(r.episode.initial.path) == r.episode.initial.digest);
    CHECK(compute_digest(r.episode.final.path) == r.episode.final.digest);
    const auto again = run_verification(*test::fixture_bundle().verification_for(*test::fixture_bundle().find_task(task_id)),
                                        r.episode.initial, r.episode.final);
    CHECK(again.all_required_satisfied());
}

TEST_CASE("synthesized families roll out: golden completes, noop does not") {
    TempDir tmp;
    TemplateBackend backend;
    for (const auto& family : TemplateBackend::families()) {
        Scenario scenario;
        for (const auto& s : TemplateBackend::example_scenarios())
            if (s.category == family) {
                scenario = s;
                break;
            }
        auto b = std::make_shared<const EnvironmentBundle>(synthesize_environment(scenario, backend).bundle);
        auto pool = pool_of(tmp, 2, b);
        for (const auto& task : b->tasks) {
            CAPTURE(task.id);
            const auto g = run_group(*pool, task.id, {golden_policy(*b, task.id), noop_policy(*b)}, {},
                                     tmp / ("run-" + family + "-" + task.id));
            CHECK(g.outcomes[0].classification.category == Category::Completed);
            CHECK(g.outcomes[1].classification.category != Category::Completed);
        }
    }
}

TEST_CASE("run directories are unique and pruned oldest first") {
    TempDir tmp;
    std::vector<std::filesystem::path> dirs;
    for (int i = 0; i < 5; ++i) dirs.push_back(new_run_dir(tmp.path()));
    std::set<std::filesystem::path> unique(dirs.begin(), dirs.end());
    CHECK(unique.size() == 5);
    CHECK(prune_runs(tmp.path(), 2) == 3);
    std::size_t left = 0;
    for (const auto& e : std::filesystem::directory_iterator(tmp.path())) left += e.is_directory();
    CHECK(left == 2);
    CHECK(prune_runs(tmp.path(), 2) == 0);
    CHECK(prune_runs(tmp / "missing", 2) == 0);
}
