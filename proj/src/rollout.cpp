#include "awm/rollout.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <thread>

#include "awm/errors.hpp"
#include "awm/reward.hpp"

namespace awm {

namespace fs = std::filesystem;

void RolloutConfig::check() const {
    if (max_turns == 0 || window == 0 || group_size == 0 || batch_size == 0)
        throw Error("rollout config values must be at least 1");
}

namespace {

TrajectoryStep make_step(std::string reasoning, Action action) {
    TrajectoryStep s;
    s.reasoning = std::move(reasoning);
    s.action = std::move(action);
    return s;
}

std::vector<TrajectoryStep> golden_sequence(const EnvironmentBundle& bundle, const std::string& task_id) {
    const auto it = bundle.golden.find(task_id);
    if (it == bundle.golden.end()) throw CrossRefError("task '" + task_id + "' has no golden script");
    std::vector<TrajectoryStep> seq;
    seq.push_back(make_step("I need to see which tools this service offers.", Action::list_tools()));
    for (const auto& c : it->second.calls) {
        if (!bundle.find_tool(c.tool)) throw CrossRefError("golden script for '" + task_id + "' uses unknown tool " + c.tool);
        seq.push_back(make_step("Next I call " + c.tool + ".", Action::call(c.tool, c.arguments)));
    }
    seq.push_back(make_step("The request is handled.", Action::answer(it->second.answer)));
    return seq;
}

class ScriptPolicy : public Policy {
public:
    ScriptPolicy(std::string kind, std::vector<TrajectoryStep> steps) : kind_(std::move(kind)), steps_(std::move(steps)) {}
    std::string kind() const override { return kind_; }
    std::optional<TrajectoryStep> step(std::size_t turn, const std::vector<TrajectoryStep>&) const override {
        if (turn == 0 || turn > steps_.size()) return std::nullopt;
        return steps_[turn - 1];
    }

private:
    std::string kind_;
    std::vector<TrajectoryStep> steps_;
};

ToolResult observe(Instance& instance, const Action& action, int id) {
    try {
        if (action.kind == ActionKind::ListTools) {
            const auto response = instance.rpc(rpc::request(id, "tools/list"));
            if (response.contains("error")) return tool_result_from_rpc(response);
            return ToolResult::ok(response.value("result", Json::object()));
        }
        const auto response = instance.rpc(
            rpc::request(id, "tools/call", {{"name", action.tool_name}, {"arguments", Json::parse(action.arguments_text)}}));
        return tool_result_from_rpc(response);
    } catch (const Error& e) {
        return ToolResult::server_error(e.what());
    }
}

}  // namespace

PolicyPtr golden_policy(const EnvironmentBundle& bundle, const std::string& task_id) {
    return std::make_shared<ScriptPolicy>("golden", golden_sequence(bundle, task_id));
}

PolicyPtr noop_policy(const EnvironmentBundle& bundle) {
    std::vector<TrajectoryStep> seq;
    seq.push_back(make_step("I need to see which tools this service offers.", Action::list_tools()));
    for (const auto& t : bundle.toolset) {
        if (t.mutating) continue;
        if (std::any_of(t.params.begin(), t.params.end(), [](const ParamSpec& p) { return p.required; })) continue;
        seq.push_back(make_step("I look around without changing anything.", Action::call(t.name, Json::object())));
        break;
    }
    seq.push_back(make_step("I will stop here.", Action::answer("I was not able to make the requested change.")));
    return std::make_shared<ScriptPolicy>("noop", std::move(seq));
}

PolicyPtr malformed_policy(const EnvironmentBundle& bundle, const std::string& task_id, int rule, std::size_t step) {
    auto seq = golden_sequence(bundle, task_id);
    if (rule == 5) {
        return std::make_shared<ScriptPolicy>(
            "malformed:5", std::vector<TrajectoryStep>{seq.front(), make_step("Nothing else is needed.", Action::answer("Done."))});
    }
    if (rule < 1 || rule > 5) throw Error("malformed policy rule must be 1-5");
    const std::size_t s = std::clamp<std::size_t>(step, 1, seq.size());
    seq.resize(s);
    auto& bad = seq.back();
    const auto first_call = std::find_if(seq.begin(), seq.end(),
                                         [](const TrajectoryStep& t) { return t.action.kind == ActionKind::CallTool; });
    const std::string some_tool = bundle.toolset.empty() ? "tool" : bundle.toolset.front().name;
    switch (rule) {
        case 1: bad.reasoning = "  "; break;
        case 2:
            if (bad.action.kind == ActionKind::CallTool)
                bad.action.direct = true;
            else
                bad.action = Action::call("no_such_tool", Json::object());
            break;
        case 3:
            bad.action = Action::call(first_call != seq.end() ? first_call->action.tool_name : some_tool, std::string("{\"oops\": "));
            break;
        case 4:
            if (s == 1)
                bad.action = Action::answer("Done.");
            else
                bad.action = Action::list_tools();
            break;
    }
    return std::make_shared<ScriptPolicy>("malformed:" + std::to_string(rule) + "@" + std::to_string(s), std::move(seq));
}

PolicyPtr replay_policy(Trajectory trajectory) {
    std::vector<TrajectoryStep> seq;
    for (const auto& s : trajectory.steps) seq.push_back(make_step(s.reasoning, s.action));
    return std::make_shared<ScriptPolicy>("replay", std::move(seq));
}

PolicyPtr make_policy(const std::string& spec, const EnvironmentBundle& bundle, const std::string& task_id) {
    if (spec == "golden") return golden_policy(bundle, task_id);
    if (spec == "noop") return noop_policy(bundle);
    if (spec.rfind("malformed:", 0) == 0) {
        const auto rest = spec.substr(10);
        const auto at = rest.find('@');
        try {
            const int rule = std::stoi(rest.substr(0, at));
            const std::size_t step = at == std::string::npos ? 2 : std::stoul(rest.substr(at + 1));
            return malformed_policy(bundle, task_id, rule, step);
        } catch (const std::logic_error&) {
            throw Error("bad malformed policy spec '" + spec + "'");
        }
    }
    if (spec.rfind("replay:", 0) == 0) return replay_policy(load_trajectory(spec.substr(7)));
    throw Error("unknown policy '" + spec + "'; expected golden, noop, malformed:<rule>[@<step>] or replay:<file>");
}

Episode run_episode(Instance& instance, const TaskSpec& task, const Policy& policy, const RolloutConfig& config,
                    const EpisodeOptions& options) {
    config.check();
    if (!instance.server().available()) throw InstanceUnavailable("instance " + instance.id() + " is not available");
    const auto& bundle = instance.bundle();
    const auto dir = options.snapshot_dir.empty() ? fs::temp_directory_path() / "awm-episodes" / instance.id()
                                                  : options.snapshot_dir;
    Episode ep;
    auto& t = ep.trajectory;
    t.task_id = task.id;
    t.instruction = task.instruction;
    t.bundle = bundle.manifest.scenario.name;
    t.instance_id = instance.id();
    t.max_turns = config.max_turns;
    ep.initial = snapshot(instance.handle(), dir / "initial");

    OnlineValidator validator(bundle.toolset, config.max_turns);
    for (std::size_t turn = 1; turn <= config.max_turns && !validator.terminated(); ++turn) {
        const std::size_t from = t.steps.size() > config.window ? t.steps.size() - config.window : 0;
        const std::vector<TrajectoryStep> window(t.steps.begin() + static_cast<std::ptrdiff_t>(from), t.steps.end());
        auto proposed = policy.step(turn, window);
        if (!proposed) break;

        // the policy speaks through the text envelope, as a model would
        const auto parsed = parse_assistant(render_assistant(*proposed));
        TrajectoryStep step;
        step.index = turn;
        step.reasoning = parsed.reasoning;
        step.action = parsed.action;

        if (validator.check_action(step).failed()) {
            t.steps.push_back(std::move(step));
            break;
        }
        if (options.kill_before_turn && *options.kill_before_turn == turn) instance.kill();
        if (step.action.kind != ActionKind::FinalAnswer) step.observation = observe(instance, step.action, static_cast<int>(turn));
        validator.check_observation(step);
        t.steps.push_back(std::move(step));
    }
    auto result = validator.finish();
    t.termination = result.termination;
    ep.verdicts = std::move(result.verdicts);
    ep.final = snapshot(instance.handle(), dir / "final");
    return ep;
}

Json EpisodeOutcome::to_json() const {
    return {{"classification", classification.to_json()}, {"reward", reward}, {"step_rewards", step_rewards}};
}

EpisodeOutcome evaluate_episode(const EnvironmentBundle& bundle, const TaskSpec& task, const Episode& episode,
                                JudgeBackend* judge_backend) {
    const auto* spec = bundle.verification_for(task);
    if (!spec) throw CrossRefError("task '" + task.id + "' has no verification");
    EpisodeOutcome out;
    out.report = run_verification(*spec, episode.initial, episode.final);
    JudgeInput in;
    in.task = &task;
    in.trajectory = &episode.trajectory;
    in.termination = episode.trajectory.termination;
    in.report = &out.report;
    in.success_criteria = spec->success_criteria;
    in.failure_criteria = spec->failure_criteria;
    out.classification = judge_backend ? judge_backend->classify(in) : judge(in);
    out.reward = reward_of(out.classification.category);
    out.step_rewards = step_rewards(episode.trajectory, episode.trajectory.termination, out.reward);
    return out;
}

Json GroupResult::to_json() const {
    Json eps = Json::array();
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        eps.push_back({{"instance_id", episodes[i].trajectory.instance_id},
                       {"termination", episodes[i].trajectory.termination.to_json()},
                       {"steps", episodes[i].trajectory.steps.size()},
                       {"category", to_string(outcomes[i].classification.category)},
                       {"reward", rewards[i]},
                       {"advantage", advantages[i]}});
    }
    return {{"episodes", eps}, {"rewards", rewards}, {"advantages", advantages}};
}

void write_episode(const fs::path& dir, const Episode& episode, const EpisodeOutcome& outcome) {
    fs::create_directories(dir);
    save_trajectory(episode.trajectory, dir / "trajectory.jsonl", &episode.verdicts);
    write_text_file(dir / "report.json", outcome.report.to_json().dump(2) + "\n");
    Json o = outcome.to_json();
    o["initial"] = episode.initial.to_json();
    o["final"] = episode.final.to_json();
    write_text_file(dir / "outcome.json", o.dump(2) + "\n");
}

GroupResult run_group(InstancePool& pool, const std::string& task_id, const std::vector<PolicyPtr>& policies,
                      const RolloutConfig& config, const fs::path& run_dir, JudgeBackend* judge_backend) {
    config.check();
    const std::size_t g = policies.size();
    if (g == 0) throw Error("a group needs at least one policy");
    if (g > pool.capacity())
        throw CapacityError("group of " + std::to_string(g) + " exceeds pool capacity " + std::to_string(pool.capacity()));
    auto instances = pool.acquire(g);

    GroupResult r;
    r.episodes.resize(g);
    r.outcomes.resize(g);
    std::vector<std::exception_ptr> errors(g);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < g; ++i) {
        threads.emplace_back([&, i] {
            try {
                auto& inst = *instances[i];
                const auto* task = inst.bundle().find_task(task_id);
                if (!task) throw CrossRefError("unknown task '" + task_id + "'");
                const auto dir = run_dir / ("episode-" + std::to_string(i));
                EpisodeOptions eo;
                eo.snapshot_dir = dir;
                r.episodes[i] = run_episode(inst, *task, *policies[i], config, eo);
                r.outcomes[i] = evaluate_episode(inst.bundle(), *task, r.episodes[i], judge_backend);
                write_episode(dir, r.episodes[i], r.outcomes[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    for (const auto& inst : instances) {
        try {
            pool.release(inst);
        } catch (const Error&) {
            pool.recycle(inst->id());
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (const auto& o : r.outcomes) r.rewards.push_back(o.reward);
    r.advantages = group_advantages(r.rewards);
    Json summary = r.to_json();
    summary["task_id"] = task_id;
    Json kinds = Json::array();
    for (const auto& p : policies) kinds.push_back(p->kind());
    summary["policies"] = kinds;
    fs::create_directories(run_dir);
    write_text_file(run_dir / "group.json", summary.dump(2) + "\n");
    return r;
}

fs::path new_run_dir(const fs::path& root) {
    static std::atomic<unsigned> seq{0};
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%S", &tm);
    std::random_device rd;
    const auto tag = sha256_hex(std::to_string(rd()) + std::to_string(seq.fetch_add(1))).substr(0, 6);
    const auto dir = root / ("run-" + std::string(stamp) + "-" + tag);
    fs::create_directories(dir);
    return dir;
}

std::size_t prune_runs(const fs::path& root, std::size_t keep) {
    if (!fs::exists(root)) return 0;
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && e.path().filename().string().rfind("run-", 0) == 0) runs.push_back(e.path());
    if (runs.size() <= keep) return 0;
    std::sort(runs.begin(), runs.end());
    const std::size_t drop = runs.size() - keep;
    for (std::size_t i = 0; i < drop; ++i) fs::remove_all(runs[i]);
    return drop;
}

}  // namespace awm
