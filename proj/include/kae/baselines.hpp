#pragma once

#include <vector>

#include "kae/common.hpp"
#include "kae/history.hpp"
#include "kae/kernels.hpp"

namespace kae {

// The value-baseline families of Fig. 2's generic-baseline picture:
//   zero            REINFORCE (no baseline)
//   batch_mean_loo  REINFORCE++: mean over the step's B*G rewards, leave-one-out
//   group_mean_loo  GRPO: mean over the prompt's other G-1 rewards
//   kae_nw          kernel-weighted history + current group, Nadaraya-Watson
//   kae_alg1        same numerator, Algorithm 1's M = h|H| + (G-1)K(0)
//   oracle          exact value by enumeration (trainer dispatches to eval)
enum class BaselineKind { zero, batch_mean_loo, group_mean_loo, kae_nw, kae_alg1, oracle };

const char* baseline_kind_name(BaselineKind kind);

// How the kernel's lag scale is chosen at step i with effective sample
// size N:
//   fixed(h)        scale = i*h, the (i-j)/(ih) argument of Algorithm 1
//   stone(c, p)     scale = i * c * N^(-1/(2p+1)), the Corollary 1 rate
//   fixed_window(w) scale = w, a deterministic ~w-step lookback
struct BandwidthRule {
    enum class Kind { fixed, stone, fixed_window };

    Kind kind = Kind::fixed_window;
    double h = 0.0;
    double c = 0.0;
    int p = 2;
    int window = 0;

    static BandwidthRule fixed(double h);
    static BandwidthRule stone(double c, int p);
    static BandwidthRule fixed_window(int window);
};

const char* bandwidth_kind_name(BandwidthRule::Kind kind);

enum class KaeMode { nw, alg1 };

// A fully specified baseline choice as it appears in configs. The kernel
// and bandwidth apply to the kae kinds only; std_normalize divides
// group_mean_loo advantages by the group reward std (comparison flag,
// outside every acceptance criterion).
struct BaselineSpec {
    BaselineKind kind = BaselineKind::kae_nw;
    KernelSpec kernel = KernelSpec::triangular();
    BandwidthRule bandwidth = BandwidthRule::fixed_window(5);
    bool std_normalize = false;
};

// The normalization a kae kind uses; non-kae kinds have none.
KaeMode kae_mode_of(BaselineKind kind);

// Mean of the other G-1 rewards in the group. G = 1 signals
// degenerate-group.
double grpo_loo_value(const std::vector<double>& group_rewards, int leave_out);

// Mean over the step's rewards excluding leave_out. A single-reward
// batch signals degenerate-batch.
double rpp_batch_value(const std::vector<double>& all_rewards, int leave_out);

// The kernel's lag scale for this rule at step current_iter; see the
// table on BandwidthRule. current_iter = 0 under fixed/stone (and
// N = 0 under stone) signals undefined-scale.
double resolve_bandwidth(const BandwidthRule& rule, int effective_n, int current_iter);

// Smallest W such that lag_weight(lag, scale) = 0 for every lag > W;
// history older than W steps cannot contribute.
int max_contributing_lag(const KernelSpec& kernel, double scale);

// Algorithm 1 Line 9. Historical rewards of the prompt enter with weight
// K((i - I_j)/scale), the other G-1 current rewards with weight K(0).
//   nw:   weighted mean (divide by the weight sum); a zero denominator
//         falls back to grpo_loo_value.
//   alg1: divide by M = h|H| + (G-1)K(0); requires the fixed bandwidth
//         rule (anything else signals unsupported-normalization).
// Empty history degrades to grpo_loo_value when G >= 2 and signals
// no-data when G = 1.
double kae_value(const HistoryStore& store, PromptId prompt, int current_iter,
                 const std::vector<double>& group_rewards, int leave_out,
                 const KernelSpec& kernel, const BandwidthRule& rule, KaeMode mode);

// Algorithm 1 Line 11: A = Z - V_hat.
double advantage(double z, double v);

// Population standard deviation of the group's rewards; used by the
// std_normalize comparison flag.
double group_reward_std(const std::vector<double>& group_rewards);

}  // namespace kae
