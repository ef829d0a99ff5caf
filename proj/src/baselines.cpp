#include "kae/baselines.hpp"

#include <climits>
#include <cmath>
#include <string>

namespace kae {

const char* baseline_kind_name(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::zero: return "zero";
        case BaselineKind::batch_mean_loo: return "batch_mean_loo";
        case BaselineKind::group_mean_loo: return "group_mean_loo";
        case BaselineKind::kae_nw: return "kae_nw";
        case BaselineKind::kae_alg1: return "kae_alg1";
        case BaselineKind::oracle: return "oracle";
    }
    return "unknown";
}

KaeMode kae_mode_of(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::kae_nw: return KaeMode::nw;
        case BaselineKind::kae_alg1: return KaeMode::alg1;
        default:
            throw Error(Errc::config_error, std::string(baseline_kind_name(kind)) +
                                                " is not a kernel baseline");
    }
}

const char* bandwidth_kind_name(BandwidthRule::Kind kind) {
    switch (kind) {
        case BandwidthRule::Kind::fixed: return "fixed";
        case BandwidthRule::Kind::stone: return "stone";
        case BandwidthRule::Kind::fixed_window: return "fixed_window";
    }
    return "unknown";
}

BandwidthRule BandwidthRule::fixed(double h) {
    if (!(h > 0.0)) {
        throw Error(Errc::invalid_bandwidth, "fixed bandwidth needs h > 0");
    }
    BandwidthRule rule;
    rule.kind = Kind::fixed;
    rule.h = h;
    return rule;
}

BandwidthRule BandwidthRule::stone(double c, int p) {
    if (!(c > 0.0) || p < 2) {
        throw Error(Errc::invalid_bandwidth, "stone rule needs c > 0 and p >= 2");
    }
    BandwidthRule rule;
    rule.kind = Kind::stone;
    rule.c = c;
    rule.p = p;
    return rule;
}

BandwidthRule BandwidthRule::fixed_window(int window) {
    if (window < 1) {
        throw Error(Errc::invalid_bandwidth, "fixed window needs w >= 1");
    }
    BandwidthRule rule;
    rule.kind = Kind::fixed_window;
    rule.window = window;
    return rule;
}

double grpo_loo_value(const std::vector<double>& group_rewards, int leave_out) {
    const int size = static_cast<int>(group_rewards.size());
    if (leave_out < 0 || leave_out >= size) {
        throw Error(Errc::malformed_input, "leave-out index out of range");
    }
    if (size < 2) {
        throw Error(Errc::degenerate_group, "group mean needs G >= 2 to leave one out");
    }
    double sum = 0.0;
    for (int k = 0; k < size; ++k) {
        if (k != leave_out) sum += group_rewards[k];
    }
    return sum / (size - 1);
}

double rpp_batch_value(const std::vector<double>& all_rewards, int leave_out) {
    const int size = static_cast<int>(all_rewards.size());
    if (leave_out < 0 || leave_out >= size) {
        throw Error(Errc::malformed_input, "leave-out index out of range");
    }
    if (size < 2) {
        throw Error(Errc::degenerate_batch, "batch mean needs B*G >= 2 to leave one out");
    }
    double sum = 0.0;
    for (int k = 0; k < size; ++k) {
        if (k != leave_out) sum += all_rewards[k];
    }
    return sum / (size - 1);
}

double resolve_bandwidth(const BandwidthRule& rule, int effective_n, int current_iter) {
    switch (rule.kind) {
        case BandwidthRule::Kind::fixed:
            if (current_iter < 1) {
                throw Error(Errc::undefined_scale, "fixed rule needs current iteration >= 1");
            }
            return current_iter * rule.h;
        case BandwidthRule::Kind::stone:
            if (current_iter < 1) {
                throw Error(Errc::undefined_scale, "stone rule needs current iteration >= 1");
            }
            if (effective_n < 1) {
                throw Error(Errc::undefined_scale, "stone rule needs effective sample size >= 1");
            }
            return current_iter * rule.c *
                   std::pow(static_cast<double>(effective_n), -1.0 / (2 * rule.p + 1));
        case BandwidthRule::Kind::fixed_window:
            return static_cast<double>(rule.window);
    }
    throw Error(Errc::config_error, "unknown bandwidth rule");
}

int max_contributing_lag(const KernelSpec& kernel, double scale) {
    if (!(scale > 0.0)) {
        throw Error(Errc::invalid_bandwidth, "lag bound needs scale > 0");
    }
    const double bound = scale * kernel.support_upper();
    if (bound >= static_cast<double>(INT_MAX)) return INT_MAX;
    return static_cast<int>(std::ceil(bound));
}

double kae_value(const HistoryStore& store, PromptId prompt, int current_iter,
                 const std::vector<double>& group_rewards, int leave_out,
                 const KernelSpec& kernel, const BandwidthRule& rule, KaeMode mode) {
    const int group_size = static_cast<int>(group_rewards.size());
    if (leave_out < 0 || leave_out >= group_size) {
        throw Error(Errc::malformed_input, "leave-out index out of range");
    }
    if (mode == KaeMode::alg1 && rule.kind != BandwidthRule::Kind::fixed) {
        throw Error(Errc::unsupported_normalization,
                    "Algorithm 1 normalization is defined for the fixed bandwidth rule only");
    }

    const std::vector<PastReward> past = store.past_records(prompt, current_iter, INT_MAX);
    if (past.empty()) {
        if (group_size < 2) {
            throw Error(Errc::no_data, "no history and no group partners for prompt " +
                                           std::to_string(prompt));
        }
        // Line 9 with |H| = 0 reduces to the group mean in both modes.
        return grpo_loo_value(group_rewards, leave_out);
    }

    const int effective_n = group_size * store.record_count(prompt) + (group_size - 1);
    const double scale = resolve_bandwidth(rule, effective_n, current_iter);
    const double k0 = kernel.eval(0.0);

    double numerator = 0.0;
    double weight_sum = 0.0;
    for (const PastReward& entry : past) {
        const double w = kernel.lag_weight(static_cast<double>(current_iter - entry.iteration),
                                           scale);
        numerator += w * entry.reward;
        weight_sum += w;
    }
    for (int k = 0; k < group_size; ++k) {
        if (k != leave_out) numerator += k0 * group_rewards[k];
    }

    if (mode == KaeMode::alg1) {
        const double m_norm = rule.h * static_cast<double>(past.size()) + (group_size - 1) * k0;
        if (m_norm == 0.0) {
            throw Error(Errc::numerical_failure, "Algorithm 1 normalizer is zero");
        }
        return numerator / m_norm;
    }

    const double denominator = weight_sum + (group_size - 1) * k0;
    if (denominator == 0.0) {
        // Every historical weight truncated to zero: only the current
        // group can speak.
        return grpo_loo_value(group_rewards, leave_out);
    }
    return numerator / denominator;
}

double advantage(double z, double v) { return z - v; }

double group_reward_std(const std::vector<double>& group_rewards) {
    if (group_rewards.empty()) {
        throw Error(Errc::degenerate_group, "cannot take the std of an empty group");
    }
    double mean = 0.0;
    for (double z : group_rewards) mean += z;
    mean /= group_rewards.size();
    double var = 0.0;
    for (double z : group_rewards) var += (z - mean) * (z - mean);
    return std::sqrt(var / group_rewards.size());
}

}  // namespace kae
