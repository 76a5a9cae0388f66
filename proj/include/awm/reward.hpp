#pragma once

// Task rewards, step rewards, group-relative advantages and history-window
// training samples.

#include <cstddef>
#include <string>
#include <vector>

#include "awm/trajectory.hpp"
#include "awm/verification.hpp"

namespace awm {

inline constexpr double kAdvantageEpsilon = 1e-8;

/// Completed 1.0, PartiallyCompleted 0.1, AgentError 0.0, EnvironmentError 0.0.
double reward_of(Category category);

struct StepRewardOptions {
    /// Whether the broadcast reward also lands on the list_tools step.
    bool reward_list_tools = true;
};

/// One entry per reached action step (termination.step of them):
/// early format error at t gives zeros then -1 at t, an environment error
/// gives zeros, normal termination broadcasts task_reward.
std::vector<double> step_rewards(const Trajectory& trajectory, const Termination& termination, double task_reward,
                                 const StepRewardOptions& options = {});

/// (R - mean) / std with population std; all zeros when std < epsilon.
std::vector<double> group_advantages(const std::vector<double>& rewards, double epsilon = kAdvantageEpsilon);

struct Message {
    std::string role;  // system, user, assistant, tool
    std::string content;
    std::size_t turn = 0;  // 0 for the system and user messages
    bool operator==(const Message&) const = default;
};

struct TrainingSample {
    std::size_t target_turn = 0;           // 1-based
    std::vector<std::size_t> context_turns;  // ascending, turns present before the target
    std::vector<Message> messages;         // context followed by the target assistant message
    std::vector<bool> loss_mask;           // true only on the target message
    Json to_json() const;
};

/// One sample per assistant turn. Sample t sees the system prompt, the user
/// instruction, turn 1 (the list_tools exchange) and the min(w, t-1) turns
/// immediately before t.
std::vector<TrainingSample> split_history(const Trajectory& trajectory, std::size_t window,
                                          const std::string& system_prompt = agent_system_prompt());

/// Turn indices in sample t's context (without the target), as split_history
/// selects them.
std::vector<std::size_t> context_turns(std::size_t target_turn, std::size_t window);

}  // namespace awm
