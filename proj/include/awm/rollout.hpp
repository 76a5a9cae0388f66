#pragma once

// Multi-turn rollouts of scripted policies against pooled instances, with
// verification, rewards and on-disk episode artifacts.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "awm/bundle.hpp"
#include "awm/instance_pool.hpp"
#include "awm/trajectory.hpp"
#include "awm/verification.hpp"

namespace awm {

struct RolloutConfig {
    std::size_t max_turns = 20;
    std::size_t window = 3;
    std::size_t group_size = 16;
    std::size_t batch_size = 64;

    /// Throws Error when any field is zero.
    void check() const;
};

/// Produces structured steps. Implementations are immutable, so one policy
/// may drive several concurrent episodes.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string kind() const = 0;
    /// Step for `turn` (1-based) given the last w steps with observations.
    /// nullopt ends the episode without an answer.
    virtual std::optional<TrajectoryStep> step(std::size_t turn, const std::vector<TrajectoryStep>& window) const = 0;
};

using PolicyPtr = std::shared_ptr<const Policy>;

/// list_tools, the task's golden calls in order, then the golden answer.
/// Throws CrossRefError when the task has no golden script or it names unknown tools.
PolicyPtr golden_policy(const EnvironmentBundle& bundle, const std::string& task_id);
/// list_tools, one read-only call without required arguments when the
/// toolset has one, then an answer. Never writes.
PolicyPtr noop_policy(const EnvironmentBundle& bundle);
/// Follows the golden sequence and breaks format rule `rule` (1-5) at `step`.
/// Rule 5 ignores `step`: list_tools then an answer.
PolicyPtr malformed_policy(const EnvironmentBundle& bundle, const std::string& task_id, int rule, std::size_t step = 2);
/// Re-issues the recorded steps.
PolicyPtr replay_policy(Trajectory trajectory);
/// "golden", "noop", "malformed:<rule>[@<step>]" or "replay:<trajectory.jsonl>".
PolicyPtr make_policy(const std::string& spec, const EnvironmentBundle& bundle, const std::string& task_id);

struct EpisodeOptions {
    /// Where the initial and final snapshots go; must outlive the instance.
    std::filesystem::path snapshot_dir;
    /// Fault injection: the instance is killed before this turn executes.
    std::optional<std::size_t> kill_before_turn;
};

struct Episode {
    Trajectory trajectory;
    std::vector<StepVerdict> verdicts;
    Snapshot initial;
    Snapshot final;
};

/// Policy step, text envelope round trip, online validation, gateway call.
/// Stops at an answer, the first failed verdict or max_turns.
/// Throws InstanceUnavailable when the instance is down before the first turn.
Episode run_episode(Instance& instance, const TaskSpec& task, const Policy& policy, const RolloutConfig& config,
                    const EpisodeOptions& options);

struct EpisodeOutcome {
    SignalReport report;
    Classification classification;
    double reward = 0;
    std::vector<double> step_rewards;
    Json to_json() const;
};

/// Verification, judge (rule-based unless given) and rewards.
EpisodeOutcome evaluate_episode(const EnvironmentBundle& bundle, const TaskSpec& task, const Episode& episode,
                                JudgeBackend* judge = nullptr);

struct GroupResult {
    std::vector<Episode> episodes;
    std::vector<EpisodeOutcome> outcomes;
    std::vector<double> rewards;
    std::vector<double> advantages;
    Json to_json() const;
};

/// One episode per policy, each on its own instance, run concurrently.
/// Instances are released (reset) afterwards. Throws CapacityError when the
/// pool cannot supply policies.size() idle instances.
GroupResult run_group(InstancePool& pool, const std::string& task_id, const std::vector<PolicyPtr>& policies,
                      const RolloutConfig& config, const std::filesystem::path& run_dir, JudgeBackend* judge = nullptr);

/// Writes trajectory.jsonl, report.json and outcome.json into `dir`.
void write_episode(const std::filesystem::path& dir, const Episode& episode, const EpisodeOutcome& outcome);

/// "run-YYYYmmddTHHMMSS-xxxxxx" under `root`, created.
std::filesystem::path new_run_dir(const std::filesystem::path& root);
/// Removes all but the `keep` most recent run directories. Returns the number removed.
std::size_t prune_runs(const std::filesystem::path& root, std::size_t keep);

}  // namespace awm
