#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kae/baselines.hpp"
#include "kae/common.hpp"
#include "kae/env.hpp"
#include "kae/history.hpp"
#include "kae/policy.hpp"
#include "kae/rng.hpp"

namespace kae {

// A training moment frozen for replication studies: the policy and the
// reward history as of one step, plus the per-step policies that
// produced the in-window history. Those past policies let replications
// redraw historical rewards from the distributions they actually came
// from, which is what makes the kernel estimators' MSE well defined.
struct FrozenSnapshot {
    PolicyParams theta;
    HistoryStore store;
    int iteration = 0;
    TaskSet task;
    std::map<int, PolicyParams> past_policies;  // keyed by training iteration
};

// One line of an MSE study. prompt is a prompt id rendered as text, or
// "all" for the across-prompt aggregate (unweighted mean of per-prompt
// rows). mse = bias_sq + variance up to roundoff by construction; se is
// the Monte-Carlo standard error of mse and is reported in grad_mse.csv
// and sweep.csv but not value_mse.csv.
struct MseRow {
    long step = 0;
    std::string algorithm;
    std::string prompt;
    double mse = 0.0;
    double bias_sq = 0.0;
    double variance = 0.0;
    double se = 0.0;
    long replications = 0;
};

// One cell of a kernel/bandwidth sensitivity sweep. The two
// bandwidth-free reference rows (group and batch leave-one-out means)
// carry kernel = "grpo" / "rpp" and bandwidth = 0.
struct SweepRow {
    std::string kernel;
    double bandwidth = 0.0;
    double mse = 0.0;
    double se = 0.0;
};

// V(x) = sum_y pi_theta(y|x) r(x, y) over the enumerated completion
// space.
double exact_value(const PolicyParams& theta, const TaskSet& task, PromptId prompt);

// J(theta) = sum_x w_x V(x).
double exact_objective(const PolicyParams& theta, const TaskSet& task);

// grad J(theta) = sum_x w_x sum_y pi(y|x) r(x,y) score(x,y), flat
// layout matching PolicyParams::flat().
std::vector<double> exact_gradient(const PolicyParams& theta, const TaskSet& task);

// Mean reward of n_samples draws from pi_theta(.|prompt).
double mc_value(const PolicyParams& theta, const TaskSet& task, PromptId prompt, int n_samples,
                RngStream& rng);

// sup_theta' J(theta') - J(theta). The supremum equals
// sum_x w_x max_y r(x,y), which is 1 for every generated task.
double suboptimality(const PolicyParams& theta, const TaskSet& task);

// Replicated value-estimation study at a frozen snapshot. Each
// replication redraws the current group (size group_size) for every
// prompt, redraws in-lookback historical rewards for kernel baselines
// from the stored past policies, and records the baseline's estimate for
// the group's slot 0. Returns one row per prompt plus the "all"
// aggregate as the last row. Kernel baselines whose lookback reaches a
// record with no stored policy signal insufficient-snapshots.
std::vector<MseRow> value_mse(const FrozenSnapshot& snapshot, const BaselineSpec& baseline,
                              int group_size, int replications, std::uint64_t seed,
                              const std::string& algorithm_label = "");

// Replicated gradient-estimation study: each replication resamples a
// full step over all prompts (the batch is the whole prompt set), builds
// the 1/(BG)-scaled advantage gradient with the given baseline, and
// accumulates squared Euclidean distance to exact_gradient.
MseRow grad_mse(const FrozenSnapshot& snapshot, const BaselineSpec& baseline, int group_size,
                int replications, std::uint64_t seed, const std::string& algorithm_label = "");

// value_mse aggregate for the Nadaraya-Watson kernel baseline at every
// (kernel, bandwidth rule) pair, followed by the two bandwidth-free
// reference rows. Row count is |kernels| * |grid| + 2. All cells share
// the seed so comparisons ride on common random numbers.
std::vector<SweepRow> sweep_bandwidth(const FrozenSnapshot& snapshot,
                                      const std::vector<KernelSpec>& kernels,
                                      const std::vector<BandwidthRule>& grid, int group_size,
                                      int replications, std::uint64_t seed);

}  // namespace kae
