#include "awm/trajectory.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "awm/errors.hpp"

namespace awm {

namespace {

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

const ToolDef* find_tool(const std::vector<ToolDef>& tools, const std::string& name) {
    for (const auto& t : tools)
        if (t.name == name) return &t;
    return nullptr;
}

bool arguments_conform(const ToolDef& tool, const std::string& text) {
    const auto args = Json::parse(text, nullptr, false);
    if (args.is_discarded() || !args.is_object()) return false;
    try {
        typecheck_arguments(tool, args);
        return true;
    } catch (const ArgumentError&) {
        return false;
    }
}

}  // namespace

Action Action::list_tools() { return {}; }

Action Action::call(std::string tool, std::string arguments_text) {
    Action a;
    a.kind = ActionKind::CallTool;
    a.tool_name = std::move(tool);
    a.arguments_text = std::move(arguments_text);
    return a;
}

Action Action::call(std::string tool, const Json& arguments) { return call(std::move(tool), canonical_dump(arguments)); }

Action Action::answer(std::string text) {
    Action a;
    a.kind = ActionKind::FinalAnswer;
    a.text = std::move(text);
    return a;
}

bool operator==(const TrajectoryStep& a, const TrajectoryStep& b) {
    if (a.index != b.index || a.reasoning != b.reasoning || !(a.action == b.action)) return false;
    if (a.observation.has_value() != b.observation.has_value()) return false;
    if (!a.observation) return true;
    return a.observation->status == b.observation->status && a.observation->message == b.observation->message &&
           a.observation->payload == b.observation->payload;
}

std::string to_string(const StepVerdict& v) {
    switch (v.kind) {
        case VerdictKind::Valid: return "valid";
        case VerdictKind::FormatError: return "format_error(" + std::to_string(v.rule) + ")";
        case VerdictKind::EnvironmentError: return "environment_error";
        case VerdictKind::Unreached: return "unreached";
    }
    return "valid";
}

StepVerdict step_verdict_from(const std::string& text) {
    if (text == "valid") return StepVerdict::valid();
    if (text == "environment_error") return StepVerdict::environment_error();
    if (text == "unreached") return StepVerdict::unreached();
    if (text.size() == 15 && text.rfind("format_error(", 0) == 0 && text.back() == ')') {
        const int rule = text[13] - '0';
        if (rule >= 1 && rule <= 5) return StepVerdict::format_error(rule);
    }
    throw ParseError("trajectory", "verdict", "unknown verdict '" + text + "'");
}

std::string to_string(TerminationKind kind) {
    switch (kind) {
        case TerminationKind::Answered: return "answered";
        case TerminationKind::FormatError: return "format_error";
        case TerminationKind::EnvironmentError: return "environment_error";
        case TerminationKind::TurnCap: return "turn_cap";
        case TerminationKind::Truncated: return "truncated";
    }
    return "truncated";
}

TerminationKind termination_kind_from(const std::string& name) {
    for (auto k : {TerminationKind::Answered, TerminationKind::FormatError, TerminationKind::EnvironmentError,
                   TerminationKind::TurnCap, TerminationKind::Truncated})
        if (to_string(k) == name) return k;
    throw ParseError("trajectory", "termination", "unknown termination '" + name + "'");
}

Json Termination::to_json() const { return {{"kind", to_string(kind)}, {"step", step}}; }

Termination Termination::from_json(const Json& j) {
    Termination t;
    t.kind = termination_kind_from(j.at("kind").get<std::string>());
    t.step = j.value("step", std::size_t{0});
    return t;
}

void StepContext::advance(const TrajectoryStep& step) {
    if (step.action.kind == ActionKind::ListTools) ++list_tools_calls;
    if (step.action.kind == ActionKind::CallTool && step.observation && step.observation->is_ok()) ++successful_calls;
}

ValidatorOptions::ValidatorOptions()
    : is_environment_error([](const ToolResult& r) { return r.status == ToolStatus::ServerError; }) {}

StepVerdict validate_action(const TrajectoryStep& step, const StepContext& context, const std::vector<ToolDef>& tools) {
    const auto& a = step.action;
    if (blank(step.reasoning)) return StepVerdict::format_error(1);
    if (a.kind == ActionKind::CallTool) {
        const auto* tool = find_tool(tools, a.tool_name);
        if (a.direct || !tool) return StepVerdict::format_error(2);
        if (!arguments_conform(*tool, a.arguments_text)) return StepVerdict::format_error(3);
    }
    if (a.kind == ActionKind::ListTools ? context.list_tools_calls > 0 : context.list_tools_calls == 0)
        return StepVerdict::format_error(4);
    return StepVerdict::valid();
}

StepVerdict validate_step(const TrajectoryStep& step, const StepContext& context, const std::vector<ToolDef>& tools,
                          const ValidatorOptions& options) {
    const auto v = validate_action(step, context, tools);
    if (v.failed()) return v;
    if (step.observation && options.is_environment_error(*step.observation)) return StepVerdict::environment_error();
    return v;
}

bool violates_interaction_consistency(std::size_t steps, const StepContext& context) {
    return steps > 1 && context.successful_calls == 0;
}

OnlineValidator::OnlineValidator(const std::vector<ToolDef>& tools, std::size_t max_turns, ValidatorOptions options)
    : tools_(tools), max_turns_(max_turns), options_(std::move(options)) {}

StepVerdict OnlineValidator::check_action(const TrajectoryStep& step) {
    if (termination_) return StepVerdict::unreached();
    const auto v = validate_action(step, context_, tools_);
    if (v.failed()) {
        ++steps_;
        verdicts_.push_back(v);
        termination_ = Termination{TerminationKind::FormatError, steps_};
    }
    return v;
}

StepVerdict OnlineValidator::check_observation(const TrajectoryStep& step) {
    if (termination_) return StepVerdict::unreached();
    ++steps_;
    auto v = StepVerdict::valid();
    if (step.observation && options_.is_environment_error(*step.observation)) v = StepVerdict::environment_error();
    verdicts_.push_back(v);
    context_.advance(step);
    if (v.failed())
        termination_ = Termination{TerminationKind::EnvironmentError, steps_};
    else if (step.action.kind == ActionKind::FinalAnswer)
        termination_ = Termination{TerminationKind::Answered, steps_};
    else if (steps_ >= max_turns_)
        termination_ = Termination{TerminationKind::TurnCap, steps_};
    return v;
}

StepVerdict OnlineValidator::feed(const TrajectoryStep& step) {
    if (termination_) {
        verdicts_.push_back(StepVerdict::unreached());
        return verdicts_.back();
    }
    const auto v = check_action(step);
    if (v.failed()) return v;
    return check_observation(step);
}

TrajectoryValidation OnlineValidator::finish() {
    if (!termination_) termination_ = Termination{TerminationKind::Truncated, steps_};
    const bool ended = termination_->kind == TerminationKind::Answered || termination_->kind == TerminationKind::TurnCap;
    if (ended && violates_interaction_consistency(steps_, context_)) {
        verdicts_[steps_ - 1] = StepVerdict::format_error(5);
        termination_ = Termination{TerminationKind::FormatError, steps_};
    }
    return {verdicts_, *termination_};
}

TrajectoryValidation validate_trajectory(const Trajectory& trajectory, const std::vector<ToolDef>& tools,
                                         const ValidatorOptions& options) {
    OnlineValidator v(tools, trajectory.max_turns, options);
    for (const auto& step : trajectory.steps) v.feed(step);
    return v.finish();
}

// JSONL

Json to_json(const Action& a) {
    switch (a.kind) {
        case ActionKind::ListTools: return {{"kind", "list_tools"}};
        case ActionKind::CallTool: {
            Json j{{"kind", "call_tool"}, {"tool_name", a.tool_name}, {"arguments", a.arguments_text}};
            if (a.direct) j["direct"] = true;
            return j;
        }
        case ActionKind::FinalAnswer: return {{"kind", "final_answer"}, {"text", a.text}};
    }
    return nullptr;
}

Action action_from_json(const Json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "list_tools") return Action::list_tools();
    if (kind == "final_answer") return Action::answer(j.at("text").get<std::string>());
    if (kind == "call_tool") {
        auto a = Action::call(j.at("tool_name").get<std::string>(), j.at("arguments").get<std::string>());
        a.direct = j.value("direct", false);
        return a;
    }
    throw ParseError("trajectory", "action", "unknown action kind '" + kind + "'");
}

Json to_json(const TrajectoryStep& s) {
    return {{"type", "step"},
            {"index", s.index},
            {"reasoning", s.reasoning},
            {"action", to_json(s.action)},
            {"observation", s.observation ? s.observation->to_json() : Json(nullptr)}};
}

TrajectoryStep step_from_json(const Json& j) {
    TrajectoryStep s;
    s.index = j.at("index").get<std::size_t>();
    s.reasoning = j.at("reasoning").get<std::string>();
    s.action = action_from_json(j.at("action"));
    if (j.contains("observation") && !j["observation"].is_null()) s.observation = ToolResult::from_json(j["observation"]);
    return s;
}

std::string trajectory_jsonl(const Trajectory& t, const std::vector<StepVerdict>* verdicts) {
    std::string out = canonical_dump(Json{{"type", "header"},
                                          {"format", kTrajectoryFormat},
                                          {"task_id", t.task_id},
                                          {"instruction", t.instruction},
                                          {"bundle", t.bundle},
                                          {"instance_id", t.instance_id},
                                          {"system_prompt_ref", t.system_prompt_ref},
                                          {"max_turns", t.max_turns},
                                          {"termination", t.termination.to_json()}});
    out += '\n';
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        auto j = to_json(t.steps[i]);
        if (verdicts && i < verdicts->size()) j["verdict"] = to_string((*verdicts)[i]);
        out += canonical_dump(j);
        out += '\n';
    }
    return out;
}

Trajectory parse_trajectory_jsonl(const std::string& text) {
    Trajectory t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        const auto where = "line " + std::to_string(lineno);
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ParseError("trajectory", where, "not a JSON object");
        try {
            const auto type = j.at("type").get<std::string>();
            if (type == "header") {
                if (header) throw ParseError("trajectory", where, "second header");
                if (j.at("format").get<std::string>() != kTrajectoryFormat)
                    throw ParseError("trajectory", where, "unsupported format");
                header = true;
                t.task_id = j.at("task_id").get<std::string>();
                t.instruction = j.value("instruction", "");
                t.bundle = j.value("bundle", "");
                t.instance_id = j.value("instance_id", "");
                t.system_prompt_ref = j.value("system_prompt_ref", t.system_prompt_ref);
                t.max_turns = j.value("max_turns", t.max_turns);
                if (j.contains("termination")) t.termination = Termination::from_json(j["termination"]);
            } else if (type == "step") {
                if (!header) throw ParseError("trajectory", where, "step before header");
                t.steps.push_back(step_from_json(j));
            } else {
                throw ParseError("trajectory", where, "unknown record type '" + type + "'");
            }
        } catch (const Json::exception& e) {
            throw ParseError("trajectory", where, e.what());
        } catch (const ParseError& e) {
            if (e.position().rfind("line ", 0) == 0) throw;
            throw ParseError("trajectory", where, e.what());
        }
    }
    if (!header) throw ParseError("trajectory", "line 1", "missing header");
    return t;
}

void save_trajectory(const Trajectory& t, const std::filesystem::path& file, const std::vector<StepVerdict>* verdicts) {
    write_text_file(file, trajectory_jsonl(t, verdicts));
}

Trajectory load_trajectory(const std::filesystem::path& file) { return parse_trajectory_jsonl(read_text_file(file)); }

// Text envelope

std::string render_assistant(const TrajectoryStep& step) {
    std::string out = "<think>\n" + step.reasoning + "\n</think>\n\n";
    const auto& a = step.action;
    switch (a.kind) {
        case ActionKind::ListTools:
            return out + "<tool_call>\n" + canonical_dump(Json{{"name", kListToolsMeta}, {"arguments", Json::object()}}) +
                   "\n</tool_call>";
        case ActionKind::CallTool: {
            const Json call = a.direct ? Json{{"name", a.tool_name}, {"arguments", a.arguments_text}}
                                       : Json{{"name", kCallToolMeta},
                                              {"arguments", {{"tool_name", a.tool_name}, {"arguments", a.arguments_text}}}};
            return out + "<tool_call>\n" + canonical_dump(call) + "\n</tool_call>";
        }
        case ActionKind::FinalAnswer: return out + a.text;
    }
    return out;
}

ParsedAssistant parse_assistant(const std::string& text) {
    ParsedAssistant p;
    std::string rest = text;
    if (const auto open = text.find("<think>"); open != std::string::npos) {
        const auto body = open + 7;
        const auto close = text.find("</think>", body);
        std::string inner = text.substr(body, close == std::string::npos ? std::string::npos : close - body);
        if (!inner.empty() && inner.front() == '\n') inner.erase(0, 1);
        if (!inner.empty() && inner.back() == '\n') inner.pop_back();
        p.reasoning = inner;
        rest = close == std::string::npos ? std::string() : text.substr(close + 8);
    }

    const auto open = rest.find("<tool_call>");
    if (open == std::string::npos) {
        if (rest.rfind("\n\n", 0) == 0)
            rest.erase(0, 2);
        else
            rest = trim(rest);
        p.action = Action::answer(rest);
        return p;
    }
    const auto body = open + 11;
    const auto close = rest.find("</tool_call>", body);
    const auto raw = trim(rest.substr(body, close == std::string::npos ? std::string::npos : close - body));

    p.action = Action::call("", raw);
    const auto j = Json::parse(raw, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("name") || !j["name"].is_string()) return p;
    const auto name = j["name"].get<std::string>();
    const Json args = j.value("arguments", Json::object());
    auto as_text = [](const Json& v) { return v.is_string() ? v.get<std::string>() : canonical_dump(v); };

    if (name == kListToolsMeta) {
        p.action = Action::list_tools();
    } else if (name == kCallToolMeta) {
        if (args.is_object() && args.contains("tool_name") && args["tool_name"].is_string())
            p.action = Action::call(args["tool_name"].get<std::string>(),
                                    args.contains("arguments") ? as_text(args["arguments"]) : std::string());
    } else {
        p.action = Action::call(name, as_text(args));
        p.action.direct = true;
    }
    return p;
}

std::string render_observation(const ToolResult& result) { return canonical_dump(result.to_json()); }

const std::string& agent_system_prompt() {
    static const std::string prompt =
        "You operate a software environment on behalf of a signed-in user. Two functions are available.\n"
        "\n"
        "list_tools: takes no arguments and returns the environment's tools with their input schemas.\n"
        "call_tool: takes {\"tool_name\": <name>, \"arguments\": <JSON object encoded as a string>} and runs one tool.\n"
        "\n"
        "Start by calling list_tools, and call it only once. Use only tool names it returned.\n"
        "Every reply begins with your reasoning inside <think></think>. Then either emit exactly one\n"
        "<tool_call>{\"name\": ..., \"arguments\": ...}</tool_call> block, or, when the task is finished,\n"
        "write the final answer for the user as plain text.\n";
    return prompt;
}

}  // namespace awm
