#pragma once

// Verification probes over snapshot pairs, derived signals and the judge.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "awm/bundle.hpp"
#include "awm/json_util.hpp"
#include "awm/state_store.hpp"
#include "awm/trajectory.hpp"

namespace awm {

struct ProbeOutcome {
    bool ok = true;
    Json rows = Json::array();  // projected row objects
    std::string error;
    /// The snapshot itself could not be read (missing file, I/O, corruption),
    /// as opposed to a query that fails against a readable database.
    bool infrastructure = false;
    ProbeTarget target = ProbeTarget::Final;
};

struct SignalOutcome {
    Json value;  // list for set_difference, integer for count_delta, bool otherwise
    bool evaluated = true;
    bool satisfied = false;
    bool required = false;
    bool guard = false;
};

struct SignalReport {
    std::map<std::string, ProbeOutcome> probes;
    std::map<std::string, SignalOutcome> signals;

    bool infrastructure_failure() const;
    bool all_required_satisfied() const;
    /// Names of guard signals that evaluated and do not hold.
    std::vector<std::string> violated_guards() const;
    Json to_json() const;
};

/// Runs every probe read-only against its snapshot. Probe failures are
/// recorded per probe and never abort the report.
SignalReport run_verification(const VerificationSpec& spec, const Snapshot& initial, const Snapshot& final);
SignalReport run_verification(const VerificationSpec& spec, const std::filesystem::path& initial_db,
                              const std::filesystem::path& final_db);

/// Whether a signal value meets its expectation. Without an expectation the
/// value must be true, a non-empty list or a non-zero number.
bool expectation_holds(const std::optional<Expectation>& expect, const Json& value);

enum class Category { Completed, PartiallyCompleted, AgentError, EnvironmentError };

/// "Completed", "PartiallyCompleted", "AgentError", "EnvironmentError"
std::string to_string(Category category);
/// Lenient: case, spaces and underscores are ignored ("Partially Completed").
Category category_from(const std::string& name);

struct Classification {
    Category category = Category::PartiallyCompleted;
    std::vector<std::string> evidence;
    std::string reasoning;
    Json confidence_score;  // passed through from external judges

    Json to_json() const;
};

struct JudgeInput {
    const TaskSpec* task = nullptr;
    const Trajectory* trajectory = nullptr;
    Termination termination;
    const SignalReport* report = nullptr;
    std::string success_criteria;
    std::string failure_criteria;
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual Classification classify(const JudgeInput& input) = 0;
};

/// Offline default. Priority: Completed, EnvironmentError, AgentError,
/// PartiallyCompleted.
class RuleJudge : public JudgeBackend {
public:
    Classification classify(const JudgeInput& input) override;
};

/// POSTs {task, trajectory, verification_report, success_criteria,
/// failure_criteria} and reads {reasoning, confidence_score, classification,
/// evidence}. Throws JudgeBackendUnavailable.
class HttpJudge : public JudgeBackend {
public:
    HttpJudge(std::string host, int port, std::string path = "/judge");
    Classification classify(const JudgeInput& input) override;
    static Json request_body(const JudgeInput& input);
    static Classification parse_response(const Json& body);

private:
    std::string host_;
    int port_;
    std::string path_;
};

Classification judge(const JudgeInput& input);

}  // namespace awm
