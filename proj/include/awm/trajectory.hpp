#pragma once

// Structured trajectories, the six tool-call format rules, early termination,
// the JSONL record format and the <think>/<tool_call> text envelope.
//
// JSONL format "awm-trajectory/1": one header line, then one line per step.
//   {"type":"header","format":"awm-trajectory/1","task_id":..,"instruction":..,
//    "bundle":..,"instance_id":..,"system_prompt_ref":..,"max_turns":20,
//    "termination":{"kind":"answered|format_error|environment_error|turn_cap|truncated","step":N}}
//   {"type":"step","index":1,"reasoning":"..","action":{..},"observation":{..}|null,
//    "verdict":".."}                                    verdict is optional on input
// Actions:
//   {"kind":"list_tools"}
//   {"kind":"call_tool","tool_name":"x","arguments":"<raw JSON text>"}   "direct":true when
//                                                       the tool was invoked without call_tool
//   {"kind":"final_answer","text":".."}
// Observations use the ToolResult form {status, payload, message}.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "awm/bundle.hpp"
#include "awm/json_util.hpp"
#include "awm/tool_runtime.hpp"

namespace awm {

inline constexpr const char* kTrajectoryFormat = "awm-trajectory/1";
inline constexpr const char* kListToolsMeta = "list_tools";
inline constexpr const char* kCallToolMeta = "call_tool";

enum class ActionKind { ListTools, CallTool, FinalAnswer };

struct Action {
    ActionKind kind = ActionKind::ListTools;
    std::string tool_name;       // CallTool
    std::string arguments_text;  // CallTool, exactly as the agent produced it
    bool direct = false;         // CallTool issued under the tool's own name
    std::string text;            // FinalAnswer

    static Action list_tools();
    static Action call(std::string tool, std::string arguments_text);
    static Action call(std::string tool, const Json& arguments);
    static Action answer(std::string text);
    bool operator==(const Action&) const = default;
};

struct TrajectoryStep {
    std::size_t index = 0;  // 1-based
    std::string reasoning;
    Action action;
    std::optional<ToolResult> observation;  // never set for FinalAnswer
};

bool operator==(const TrajectoryStep& a, const TrajectoryStep& b);

enum class VerdictKind { Valid, FormatError, EnvironmentError, Unreached };

struct StepVerdict {
    VerdictKind kind = VerdictKind::Valid;
    int rule = 0;  // 1..5 for FormatError, 6 for EnvironmentError

    static StepVerdict valid() { return {}; }
    static StepVerdict format_error(int rule) { return {VerdictKind::FormatError, rule}; }
    static StepVerdict environment_error() { return {VerdictKind::EnvironmentError, 6}; }
    static StepVerdict unreached() { return {VerdictKind::Unreached, 0}; }
    bool failed() const { return kind == VerdictKind::FormatError || kind == VerdictKind::EnvironmentError; }
    bool operator==(const StepVerdict&) const = default;
};

/// "valid", "format_error(3)", "environment_error", "unreached"
std::string to_string(const StepVerdict& verdict);
StepVerdict step_verdict_from(const std::string& text);

enum class TerminationKind {
    Answered,
    FormatError,
    EnvironmentError,
    TurnCap,
    Truncated,  // the record stops before an answer and below the turn cap
};

struct Termination {
    TerminationKind kind = TerminationKind::Truncated;
    std::size_t step = 0;  // terminating step for FormatError / EnvironmentError

    bool early() const { return kind == TerminationKind::FormatError || kind == TerminationKind::EnvironmentError; }
    bool operator==(const Termination&) const = default;
    Json to_json() const;
    static Termination from_json(const Json& j);
};

std::string to_string(TerminationKind kind);
TerminationKind termination_kind_from(const std::string& name);

struct Trajectory {
    std::string task_id;
    std::string instruction;
    std::string bundle;
    std::string instance_id;
    std::string system_prompt_ref = "awm-agent/1";
    std::size_t max_turns = 20;
    std::vector<TrajectoryStep> steps;
    Termination termination;
};

/// Counts carried from earlier steps.
struct StepContext {
    std::size_t list_tools_calls = 0;
    std::size_t successful_calls = 0;  // call_tool steps observed with status ok

    void advance(const TrajectoryStep& step);
};

struct ValidatorOptions {
    /// Rule 6. Defaults to server_error status, which the gateway uses for
    /// timeouts, runtime faults and unavailable instances.
    std::function<bool(const ToolResult&)> is_environment_error;

    ValidatorOptions();
};

/// Rules 1-4 on the action alone; decidable before the call is executed.
StepVerdict validate_action(const TrajectoryStep& step, const StepContext& context,
                            const std::vector<ToolDef>& tools);

/// Rules 1-4 then rule 6 on the observation. Lowest violated rule wins.
StepVerdict validate_step(const TrajectoryStep& step, const StepContext& context, const std::vector<ToolDef>& tools,
                          const ValidatorOptions& options = {});

/// Rule 5, checked once the trajectory has ended (answered or turn cap)
/// without an earlier failure. Truncated records are not judged.
bool violates_interaction_consistency(std::size_t steps, const StepContext& context);

struct TrajectoryValidation {
    std::vector<StepVerdict> verdicts;  // one per step
    Termination termination;
};

/// Offline validation. Stops at the first failure; later steps are unreached.
TrajectoryValidation validate_trajectory(const Trajectory& trajectory, const std::vector<ToolDef>& tools,
                                         const ValidatorOptions& options = {});

/// Step-by-step validation for rollouts; agrees with validate_trajectory on
/// every prefix.
class OnlineValidator {
public:
    OnlineValidator(const std::vector<ToolDef>& tools, std::size_t max_turns, ValidatorOptions options = {});

    /// Rules 1-4 for the next step; a failure terminates.
    StepVerdict check_action(const TrajectoryStep& step);
    /// Rule 6 once the observation is known; records the step.
    StepVerdict check_observation(const TrajectoryStep& step);
    /// Both checks at once for steps that are already complete.
    StepVerdict feed(const TrajectoryStep& step);

    bool terminated() const { return termination_.has_value(); }
    /// Applies rule 5 and the turn cap; returns the final decision.
    TrajectoryValidation finish();

    const std::vector<StepVerdict>& verdicts() const { return verdicts_; }

private:
    const std::vector<ToolDef>& tools_;
    std::size_t max_turns_;
    ValidatorOptions options_;
    StepContext context_;
    std::vector<StepVerdict> verdicts_;
    std::optional<Termination> termination_;
    std::size_t steps_ = 0;
};

// JSONL

Json to_json(const Action& action);
Action action_from_json(const Json& j);
Json to_json(const TrajectoryStep& step);
TrajectoryStep step_from_json(const Json& j);

/// Verdicts, when given, are written alongside each step.
std::string trajectory_jsonl(const Trajectory& trajectory, const std::vector<StepVerdict>* verdicts = nullptr);
/// Throws ParseError with position "line N".
Trajectory parse_trajectory_jsonl(const std::string& text);
void save_trajectory(const Trajectory& trajectory, const std::filesystem::path& file,
                     const std::vector<StepVerdict>* verdicts = nullptr);
Trajectory load_trajectory(const std::filesystem::path& file);

// Text envelope

/// Assistant message text: <think> block, then a <tool_call> block or the answer.
std::string render_assistant(const TrajectoryStep& step);

struct ParsedAssistant {
    std::string reasoning;
    Action action;
};

/// Inverse of render_assistant. Text that is not a well-formed envelope
/// still yields an action so the validator can classify it: a missing think
/// block gives empty reasoning, an unreadable tool_call body gives a call
/// with an empty tool name.
ParsedAssistant parse_assistant(const std::string& text);

/// Tool message text for an observation.
std::string render_observation(const ToolResult& result);

/// System prompt for agents driving an environment through the two meta-tools.
const std::string& agent_system_prompt();

}  // namespace awm
