#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kae/baselines.hpp"
#include "kae/common.hpp"
#include "kae/env.hpp"
#include "kae/eval.hpp"
#include "kae/history.hpp"
#include "kae/policy.hpp"
#include "kae/rng.hpp"

namespace kae {

// Step-size schedule of Assumption 7. Iterations are 0-based, so the
// inverse schedule reads beta/(i+1): the 1/i asymptotics without the
// undefined i=0 case.
struct LrSchedule {
    enum class Kind { constant, inverse };

    Kind kind = Kind::constant;
    double value = 0.1;  // eta under constant, beta under inverse

    static LrSchedule constant(double eta);
    static LrSchedule inverse(double beta);
    double at(int iteration) const;
};

struct TrainConfig {
    int steps = 100;
    int batch_size = 4;
    int group_size = 4;
    BaselineSpec baseline;
    ScheduleKind schedule_kind = ScheduleKind::block_reuse;
    int reuse_length = 10;  // J, block_reuse only
    LrSchedule lr;
    std::uint64_t seed = 0;
    std::vector<int> snapshot_steps;     // steps whose checkpoints get written out
    std::optional<int> retention;        // history retention; unset keeps everything

    // Bounding retention also bounds how far back snapshot_at() can
    // reconstruct history, so the default keeps everything (desk scale).
    void validate(const TaskSet& task) const;
};

// Everything Algorithm 1 carries from one iteration to the next.
struct TrainState {
    PolicyParams theta;
    HistoryStore store;
    int iteration = 0;
    MinibatchSampler sampler;
    RngStream schedule_rng;    // minibatch draws
    RngStream completion_rng;  // generation
};

// One sampled step: the minibatch and its G completions and rewards per
// prompt.
struct StepBatch {
    std::vector<PromptId> prompts;
    std::vector<std::vector<Completion>> completions;  // [B][G]
    std::vector<std::vector<double>> rewards;          // [B][G]
};

struct StepReport {
    int iteration = 0;
    std::vector<PromptId> prompts;
    double mean_train_reward = 0.0;
    double exact_objective = 0.0;  // J(theta_i): the policy that generated the step
    double grad_norm = 0.0;
    double lr = 0.0;
    std::vector<double> baseline_means;  // per batch slot, mean over the group
    int fallback_count = 0;              // slots that fell down the baseline ladder
};

// Full trace of one run: theta_0 .. theta_n (so any step can be frozen
// for evaluation), per-step reports, and the final history.
struct RunRecord {
    TrainConfig config;
    std::vector<StepReport> reports;
    std::vector<PolicyParams> policies;
    HistoryStore store;

    const PolicyParams& final_policy() const { return policies.back(); }
};

TrainState init_state(const TrainConfig& config, const TaskSet& task);

StepBatch draw_batch(TrainState& state, const TrainConfig& config, const TaskSet& task);

// Algorithm 1 Line 12: (1/(BG)) sum_b sum_g A^(b,g) score. Degenerate
// baselines fall down a ladder instead of aborting the step: a kernel
// baseline with empty history uses the group mean (Line 7) when G >= 2;
// with G = 1 and no history, and for a single-reward batch mean, the
// value is 0 (plain REINFORCE) — the only remaining unbiased choice.
// out_report, when given, receives baseline_means and fallback_count.
std::vector<double> estimate_gradient(const TrainState& state, const StepBatch& batch,
                                      const TrainConfig& config, const TaskSet& task,
                                      StepReport* out_report = nullptr);

// Lines 3-14: sample, generate, estimate, ascend, then record the
// minibatch rewards under the pre-update iteration index. A non-finite
// gradient signals numerical-failure.
StepReport step(TrainState& state, const TrainConfig& config, const TaskSet& task);

RunRecord train(const TrainConfig& config, const TaskSet& task);

// Freezes the run at a step in [0, n]: theta_step, the history recorded
// strictly before it, and the per-step policies for the preceding
// `lookback` iterations (everything when lookback < 0).
FrozenSnapshot snapshot_at(const RunRecord& run, const TaskSet& task, int step,
                           int lookback = -1);

}  // namespace kae
