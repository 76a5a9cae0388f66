#include "awm/errors.hpp"
#include "awm/mcp_gateway.hpp"
#include "awm/synth.hpp"

namespace awm {

namespace {

const char* stage_instructions(Stage stage) {
    switch (stage) {
        case Stage::Tasks:
            return "Write {k} distinct user requests for this service. Each must change stored data, name concrete "
                   "values and be answerable without logging in. Reply with a JSON array of objects with the keys "
                   "\"id\" (lowercase, dashes) and \"instruction\".";
        case Stage::Schema:
            return "Design the SQLite schema that supports every request. Use one CREATE TABLE per table, foreign "
                   "keys where rows refer to each other, and no password, token or session columns. Reply with the "
                   "SQL text only.";
        case Stage::Seed:
            return "Write INSERT statements that populate the schema with realistic rows, including every row the "
                   "requests mention. Group statements by table, parents before children, and open each group "
                   "with the line \"-- @table <name>\" followed by \"-- @rationale <why>\". Reply with the SQL text only.";
        case Stage::Toolset:
            return "List the tools an agent needs to carry out the requests. Reply with a JSON array of tool "
                   "interfaces with the keys name, summary, description, tags, mutating and params "
                   "(name, type, required, nullable, default, description, example).";
        case Stage::Plans:
            return "Implement every tool as an ordered SQL plan over the schema. Reply with a JSON object mapping "
                   "tool name to {\"plan\": [...], \"response\": [...], \"constants\": {...}} using the plan step "
                   "format of the toolset file.";
        case Stage::Verification:
            return "For every request write a verification that compares the database before and after an agent "
                   "run. Reply with a JSON object mapping task id to {\"spec\": {...}, \"golden\": {\"calls\": [...], "
                   "\"answer\": \"...\"}} where golden is a sequence of tool calls that completes the request.";
    }
    return "";
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = text.find(from, pos)) != std::string::npos; pos += to.size())
        text.replace(pos, from.size(), to);
    return text;
}

}  // namespace

const char* ExternalBackend::prompt_version() { return "awm-prompts/1"; }

std::string ExternalBackend::render_prompt(const GenerationRequest& req) {
    std::string out = "You are building a simulated web service backed by SQLite.\n\n";
    const auto& ctx = req.context;
    if (ctx.contains("scenario")) out += "Service:\n" + ctx["scenario"].dump(2) + "\n\n";
    for (auto stage : kStageOrder) {
        const auto key = to_string(stage);
        if (stage == req.stage || !ctx.contains(key)) continue;
        out += "Accepted " + key + ":\n" + ctx[key].get<std::string>() + "\n\n";
    }
    const auto k = ctx.contains("k") ? std::to_string(ctx["k"].get<std::size_t>()) : std::string("10");
    out += replace_all(stage_instructions(req.stage), "{k}", k);
    if (req.error_summary) out += "\n\nThe previous attempt failed when executed:\n" + *req.error_summary + "\nFix these problems.";
    return out;
}

ExternalBackend::ExternalBackend(std::string host, int port, std::string path)
    : host_(std::move(host)), port_(port), path_(std::move(path)) {}

GenerationResult ExternalBackend::generate(const GenerationRequest& request) {
    auto body = request.to_json();
    body["prompt"] = render_prompt(request);
    body["prompt_version"] = prompt_version();
    Json reply;
    try {
        reply = http_post_json(host_, port_, path_, body, std::chrono::seconds(300));
    } catch (const Error& e) {
        throw BackendFailure(std::string("generation backend: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("artifact_text") || !reply["artifact_text"].is_string())
        throw BackendFailure("generation backend reply lacks artifact_text");
    GenerationResult r;
    r.artifact_text = reply["artifact_text"].get<std::string>();
    if (reply.contains("cost_usd") && reply["cost_usd"].is_number()) r.cost_usd = reply["cost_usd"].get<double>();
    return r;
}

}  // namespace awm
