#include "awm/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace awm {

double reward_of(Category category) {
    switch (category) {
        case Category::Completed: return 1.0;
        case Category::PartiallyCompleted: return 0.1;
        case Category::AgentError: return 0.0;
        case Category::EnvironmentError: return 0.0;
    }
    return 0.0;
}

std::vector<double> step_rewards(const Trajectory& trajectory, const Termination& termination, double task_reward,
                                 const StepRewardOptions& options) {
    const std::size_t n = std::min(termination.step, trajectory.steps.size());
    std::vector<double> r(n, 0.0);
    if (n == 0) return r;
    switch (termination.kind) {
        case TerminationKind::FormatError: r[n - 1] = -1.0; break;
        case TerminationKind::EnvironmentError: break;
        default:
            for (std::size_t i = 0; i < n; ++i)
                if (options.reward_list_tools || trajectory.steps[i].action.kind != ActionKind::ListTools)
                    r[i] = task_reward;
            break;
    }
    return r;
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double epsilon) {
    std::vector<double> a(rewards.size(), 0.0);
    if (rewards.empty()) return a;
    const double g = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / g;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / g);
    if (sd < epsilon) return a;
    for (std::size_t i = 0; i < rewards.size(); ++i) a[i] = (rewards[i] - mean) / sd;
    return a;
}

std::vector<std::size_t> context_turns(std::size_t t, std::size_t w) {
    std::vector<std::size_t> turns;
    if (t <= 1) return turns;
    turns.push_back(1);
    const std::size_t k = std::min(w, t - 1);
    for (std::size_t i = t - k; i < t; ++i)
        if (i != 1) turns.push_back(i);
    return turns;
}

Json TrainingSample::to_json() const {
    Json msgs = Json::array();
    for (std::size_t i = 0; i < messages.size(); ++i)
        msgs.push_back({{"role", messages[i].role},
                        {"content", messages[i].content},
                        {"turn", messages[i].turn},
                        {"loss", static_cast<bool>(loss_mask[i])}});
    return {{"target_turn", target_turn}, {"context_turns", context_turns}, {"messages", msgs}};
}

std::vector<TrainingSample> split_history(const Trajectory& trajectory, std::size_t window,
                                          const std::string& system_prompt) {
    const auto& steps = trajectory.steps;
    auto turn_messages = [&](std::size_t turn, std::vector<Message>& out) {
        const auto& s = steps[turn - 1];
        out.push_back({"assistant", render_assistant(s), turn});
        if (s.observation) out.push_back({"tool", render_observation(*s.observation), turn});
    };

    std::vector<TrainingSample> samples;
    for (std::size_t t = 1; t <= steps.size(); ++t) {
        TrainingSample sample;
        sample.target_turn = t;
        sample.context_turns = context_turns(t, window);
        sample.messages.push_back({"system", system_prompt, 0});
        sample.messages.push_back({"user", trajectory.instruction, 0});
        for (auto turn : sample.context_turns) turn_messages(turn, sample.messages);
        sample.messages.push_back({"assistant", render_assistant(steps[t - 1]), t});
        sample.loss_mask.assign(sample.messages.size(), false);
        sample.loss_mask.back() = true;
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace awm
