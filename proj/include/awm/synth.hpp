#pragma once

// Environment synthesis: staged generation through a pluggable backend with
// execution-based self-correction, scenario dedup and corpus statistics.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "awm/bundle.hpp"
#include "awm/json_util.hpp"

namespace awm {

enum class Stage { Tasks, Schema, Seed, Toolset, Plans, Verification };

inline constexpr Stage kStageOrder[] = {Stage::Tasks, Stage::Schema,  Stage::Seed,
                                        Stage::Toolset, Stage::Plans, Stage::Verification};

/// "tasks", "schema", "seed", "toolset", "plans", "verification"
std::string to_string(Stage stage);
Stage stage_from(const std::string& name);

struct GenerationRequest {
    Stage stage = Stage::Tasks;
    Json context = Json::object();  // scenario, k and every artifact accepted so far
    std::optional<std::string> error_summary;
    int attempt = 1;
    Json to_json() const;
};

struct GenerationResult {
    std::string artifact_text;
    double cost_usd = 0;
};

// Artifact text per stage:
//   tasks         JSON array of {id, instruction}
//   schema        schema.sql text
//   seed          seed.sql text
//   toolset       JSON array of tool interfaces (toolset.json entries without plan/response)
//   plans         JSON object tool name -> {plan, response, constants?}
//   verification  JSON object task id -> {spec: verify/<id>.json content, golden?: {calls, answer}}
class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual std::string name() const = 0;
    virtual bool supports(Stage stage) const = 0;
    virtual bool deterministic() const = 0;
    /// Throws BackendFailure on transport problems only.
    virtual GenerationResult generate(const GenerationRequest& request) = 0;
};

struct CorrectionPolicy {
    int max_retries = 5;
    std::map<Stage, double> thresholds = {{Stage::Tasks, 0.0},   {Stage::Schema, 0.10}, {Stage::Seed, 0.10},
                                          {Stage::Toolset, 0.0}, {Stage::Plans, 0.0},   {Stage::Verification, 0.0}};
    std::size_t summary_word_limit = 500;

    double threshold(Stage stage) const;
};

/// Outcome of executing one candidate artifact.
struct StageEvaluation {
    std::size_t failures = 0;
    std::size_t total = 0;
    std::vector<std::string> errors;
    /// Artifact with failing parts removed; what is kept when accepted.
    std::string normalized;

    double failure_fraction() const;
};

using StageEvaluator = std::function<StageEvaluation(const std::string& artifact_text)>;

struct StageRecord {
    Stage stage = Stage::Tasks;
    int attempts = 0;
    std::vector<double> failure_fractions;
    std::vector<std::string> error_summaries;  // fed into the following attempt
    int selected_attempt = 0;                  // 1-based
    std::string accepted_digest;
    bool success = false;
    double cost_usd = 0;
    Json to_json() const;
};

struct CorrectionOutcome {
    std::string artifact;  // normalized text of the selected attempt
    StageRecord record;
};

/// Generate, execute, feed errors back. Accepts the first attempt within the
/// stage threshold; otherwise selects the attempt with the lowest failure
/// fraction (earliest on ties) and marks the stage unsuccessful.
/// Throws StageFailed when the backend lacks the stage, BackendFailure.
CorrectionOutcome correction_loop(Stage stage, const Json& context, GeneratorBackend& backend,
                                  const CorrectionPolicy& policy, const StageEvaluator& evaluate);

/// Error lines joined and cut to at most `word_limit` words.
std::string summarize_errors(const std::vector<std::string>& errors, std::size_t word_limit);

struct SynthesisRecord {
    std::string scenario;
    std::vector<StageRecord> stages;
    double cost_usd() const;
    Json to_json() const;
};

struct SynthesisOptions {
    std::size_t tasks_per_scenario = 10;
    ValidationOptions validation;
};

struct SynthesisResult {
    EnvironmentBundle bundle;
    SynthesisRecord record;
};

/// Stage evaluators used by synthesize_environment; exposed for tests.
/// `partial` holds the artifacts accepted by earlier stages.
StageEvaluation evaluate_stage(Stage stage, const std::string& artifact_text, const EnvironmentBundle& partial,
                               const SynthesisOptions& options);

/// Throws StageFailed(stage) when no usable bundle results, BackendFailure.
SynthesisResult synthesize_environment(const Scenario& scenario, GeneratorBackend& backend,
                                       const CorrectionPolicy& policy = {}, const SynthesisOptions& options = {});

/// Per-stage success rate, mean attempts and cost over many records.
Json synthesis_report(const std::vector<SynthesisRecord>& records);

// Backends

struct TemplateOptions {
    /// Number of leading attempts per stage that return a defective artifact.
    std::map<Stage, int> faulty_attempts;
};

/// Deterministic offline backend expanding parameterized scenario families.
/// The family is chosen by scenario category; data varies with the name.
class TemplateBackend : public GeneratorBackend {
public:
    explicit TemplateBackend(TemplateOptions options = {});
    std::string name() const override { return "template"; }
    bool supports(Stage) const override { return true; }
    bool deterministic() const override { return true; }
    GenerationResult generate(const GenerationRequest& request) override;

    static std::vector<std::string> families();
    /// Scenario seeds for each family, suitable for a scenarios file.
    static std::vector<Scenario> example_scenarios();

private:
    TemplateOptions options_;
};

/// Chat-completion style HTTP backend. POSTs {stage, context, error_summary?,
/// prompt, prompt_version} and expects {artifact_text, cost_usd?}.
class ExternalBackend : public GeneratorBackend {
public:
    ExternalBackend(std::string host, int port, std::string path = "/generate");
    std::string name() const override { return "external"; }
    bool supports(Stage) const override { return true; }
    bool deterministic() const override { return false; }
    GenerationResult generate(const GenerationRequest& request) override;

    /// Filled-in prompt for a request.
    static std::string render_prompt(const GenerationRequest& request);
    static const char* prompt_version();

private:
    std::string host_;
    int port_;
    std::string path_;
};

// Scenario dedup

using Embedder = std::function<std::vector<double>(const std::string&)>;

/// Deterministic hashed bag-of-words embedding, L2-normalized.
std::vector<double> hashed_embedding(const std::string& text, std::size_t dim = 256);
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct DedupOptions {
    double threshold = 0.85;
    std::map<std::string, std::size_t> category_caps;
    std::optional<std::size_t> default_cap;
    /// Optional suitability filter applied before similarity (pass-through when empty).
    std::function<bool(const Scenario&)> accept;
};

struct DedupResult {
    std::vector<std::size_t> kept;  // indices into the input, in input order
    std::map<std::size_t, std::string> dropped;  // index -> reason
};

/// Text embedded for a scenario: name, then description.
std::string scenario_text(const Scenario& scenario);

DedupResult dedup_scenarios(const std::vector<Scenario>& candidates, const Embedder& embedder,
                            const DedupOptions& options = {});

std::vector<Scenario> load_scenarios(const std::filesystem::path& file);

// Corpus statistics

struct Summary {
    double mean = 0;
    double median = 0;
    double p90 = 0;  // nearest rank
};

/// Throws EmptySet.
Summary summarize(std::vector<double> values);

struct StatsReport {
    std::size_t bundles = 0;
    Summary tables;
    Summary records;
    Summary tools;
    Summary tasks;
    Json to_json() const;
};

/// Throws EmptySet.
StatsReport bundle_stats(const std::vector<EnvironmentBundle>& bundles);

}  // namespace awm
