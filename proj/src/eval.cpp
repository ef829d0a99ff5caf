#include "kae/eval.hpp"

#include <cmath>
#include <string>

namespace kae {

namespace {

void check_compatible(const PolicyParams& theta, const TaskSet& task) {
    if (theta.prompt_count() != task.prompt_count() ||
        theta.completion_length() != task.completion_length() ||
        theta.vocab_size() != task.vocab_size()) {
        throw Error(Errc::malformed_input, "policy and task dimensions disagree");
    }
}

// Per-position softmax rows for one prompt, so enumeration loops can
// take products instead of re-running logsumexp per completion.
std::vector<std::vector<double>> prob_rows(const PolicyParams& theta, PromptId prompt) {
    std::vector<std::vector<double>> rows;
    rows.reserve(theta.completion_length());
    for (int t = 0; t < theta.completion_length(); ++t) {
        rows.push_back(theta.position_probs(prompt, t));
    }
    return rows;
}

double completion_prob(const std::vector<std::vector<double>>& rows, const Completion& y) {
    double p = 1.0;
    for (std::size_t t = 0; t < y.tokens.size(); ++t) p *= rows[t][y.tokens[t]];
    return p;
}

// Standard error of the mean with the n-1 sample variance.
double sample_se(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= (n - 1);
    return std::sqrt(var / n);
}

bool is_kernel_kind(BaselineKind kind) {
    return kind == BaselineKind::kae_nw || kind == BaselineKind::kae_alg1;
}

// One freshly sampled training step over every prompt.
struct StepDraw {
    std::vector<std::vector<Completion>> completions;  // [m][G]
    std::vector<std::vector<double>> rewards;          // [m][G]
    std::vector<double> flat;                          // prompt-major [m*G]
};

StepDraw draw_step(const PolicyParams& theta, const TaskSet& task, int group_size,
                   RngStream& rng) {
    const int m = task.prompt_count();
    StepDraw draw;
    draw.completions.resize(m);
    draw.rewards.resize(m);
    draw.flat.reserve(static_cast<std::size_t>(m) * group_size);
    for (int x = 0; x < m; ++x) {
        draw.completions[x] = theta.sample(x, group_size, rng);
        draw.rewards[x].reserve(group_size);
        for (const Completion& y : draw.completions[x]) {
            const double z = task.reward(x, y);
            draw.rewards[x].push_back(z);
            draw.flat.push_back(z);
        }
    }
    return draw;
}

// Largest lag that can contribute per prompt at the snapshot step,
// zero where the prompt has no history.
std::vector<int> kae_lookbacks(const FrozenSnapshot& snapshot, const BaselineSpec& baseline,
                               int group_size) {
    const int m = snapshot.task.prompt_count();
    std::vector<int> lookback(m, 0);
    for (int x = 0; x < m; ++x) {
        if (snapshot.store.record_count(x) == 0) continue;
        const int ess = snapshot.store.effective_sample_size(x, group_size);
        const double scale = resolve_bandwidth(baseline.bandwidth, ess, snapshot.iteration);
        lookback[x] = max_contributing_lag(baseline.kernel, scale);
    }
    return lookback;
}

void require_snapshots(const FrozenSnapshot& snapshot, const std::vector<int>& lookback) {
    for (int x = 0; x < snapshot.task.prompt_count(); ++x) {
        for (const RewardRecord& rec : snapshot.store.records(x)) {
            const int lag = snapshot.iteration - rec.iteration;
            if (lag < 1 || lag > lookback[x]) continue;
            if (snapshot.past_policies.find(rec.iteration) == snapshot.past_policies.end()) {
                throw Error(Errc::insufficient_snapshots,
                            "no stored policy for iteration " + std::to_string(rec.iteration) +
                                ", needed to resample prompt " + std::to_string(x));
            }
        }
    }
}

// Fresh history with in-lookback rewards redrawn from the policies
// that originally produced them; out-of-window records keep their
// recorded (zero-weight) values.
HistoryStore resample_history(const FrozenSnapshot& snapshot, const std::vector<int>& lookback,
                              RngStream& rng) {
    HistoryStore out;
    for (int x = 0; x < snapshot.task.prompt_count(); ++x) {
        for (const RewardRecord& rec : snapshot.store.records(x)) {
            const int lag = snapshot.iteration - rec.iteration;
            std::vector<double> rewards = rec.rewards;
            if (lag >= 1 && lag <= lookback[x]) {
                const PolicyParams& past = snapshot.past_policies.at(rec.iteration);
                for (double& z : rewards) z = snapshot.task.reward(x, past.sample_one(x, rng));
            }
            out.record(x, rec.iteration, std::move(rewards));
        }
    }
    return out;
}

double slot_estimate(const BaselineSpec& baseline, const StepDraw& draw,
                     const HistoryStore& store, int iteration,
                     const std::vector<double>& truth, PromptId x, int slot, int group_size) {
    switch (baseline.kind) {
        case BaselineKind::zero:
            return 0.0;
        case BaselineKind::group_mean_loo:
            return grpo_loo_value(draw.rewards[x], slot);
        case BaselineKind::batch_mean_loo:
            return rpp_batch_value(draw.flat, x * group_size + slot);
        case BaselineKind::kae_nw:
        case BaselineKind::kae_alg1:
            return kae_value(store, x, iteration, draw.rewards[x], slot, baseline.kernel,
                             baseline.bandwidth, kae_mode_of(baseline.kind));
        case BaselineKind::oracle:
            return truth[x];
    }
    throw Error(Errc::config_error, "unknown baseline kind");
}

double bandwidth_value(const BandwidthRule& rule) {
    switch (rule.kind) {
        case BandwidthRule::Kind::fixed: return rule.h;
        case BandwidthRule::Kind::stone: return rule.c;
        case BandwidthRule::Kind::fixed_window: return static_cast<double>(rule.window);
    }
    return 0.0;
}

}  // namespace

double exact_value(const PolicyParams& theta, const TaskSet& task, PromptId prompt) {
    check_compatible(theta, task);
    if (prompt < 0 || prompt >= task.prompt_count()) {
        throw Error(Errc::malformed_input, "prompt id out of range");
    }
    const std::vector<Completion> completions =
        enumerate_completions(task.vocab_size(), task.completion_length());
    const auto rows = prob_rows(theta, prompt);
    double value = 0.0;
    for (const Completion& y : completions) {
        value += completion_prob(rows, y) * task.reward(prompt, y);
    }
    return value;
}

double exact_objective(const PolicyParams& theta, const TaskSet& task) {
    check_compatible(theta, task);
    const std::vector<double>& weights = task.prompt_weights();
    double objective = 0.0;
    for (int x = 0; x < task.prompt_count(); ++x) {
        objective += weights[x] * exact_value(theta, task, x);
    }
    return objective;
}

std::vector<double> exact_gradient(const PolicyParams& theta, const TaskSet& task) {
    check_compatible(theta, task);
    const std::vector<Completion> completions =
        enumerate_completions(task.vocab_size(), task.completion_length());
    const std::vector<double>& weights = task.prompt_weights();
    std::vector<double> grad(theta.dimension(), 0.0);
    for (int x = 0; x < task.prompt_count(); ++x) {
        const auto rows = prob_rows(theta, x);
        for (const Completion& y : completions) {
            const double r = task.reward(x, y);
            if (r == 0.0) continue;
            theta.accumulate_score(x, y, weights[x] * completion_prob(rows, y) * r, grad);
        }
    }
    return grad;
}

double mc_value(const PolicyParams& theta, const TaskSet& task, PromptId prompt, int n_samples,
                RngStream& rng) {
    check_compatible(theta, task);
    if (n_samples < 1) {
        throw Error(Errc::malformed_input, "Monte-Carlo value needs at least one sample");
    }
    double total = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        total += task.reward(prompt, theta.sample_one(prompt, rng));
    }
    return total / n_samples;
}

double suboptimality(const PolicyParams& theta, const TaskSet& task) {
    check_compatible(theta, task);
    const std::vector<Completion> completions =
        enumerate_completions(task.vocab_size(), task.completion_length());
    const std::vector<double>& weights = task.prompt_weights();
    double best = 0.0;
    for (int x = 0; x < task.prompt_count(); ++x) {
        double top = 0.0;
        for (const Completion& y : completions) top = std::max(top, task.reward(x, y));
        best += weights[x] * top;
    }
    return best - exact_objective(theta, task);
}

std::vector<MseRow> value_mse(const FrozenSnapshot& snapshot, const BaselineSpec& baseline,
                              int group_size, int replications, std::uint64_t seed,
                              const std::string& algorithm_label) {
    const TaskSet& task = snapshot.task;
    check_compatible(snapshot.theta, task);
    if (replications < 2) {
        throw Error(Errc::malformed_input, "an MSE needs at least 2 replications");
    }
    if (group_size < 1) {
        throw Error(Errc::degenerate_group, "group size must be >= 1");
    }
    const int m = task.prompt_count();
    const std::string label =
        algorithm_label.empty() ? baseline_kind_name(baseline.kind) : algorithm_label;

    std::vector<double> truth(m);
    for (int x = 0; x < m; ++x) truth[x] = exact_value(snapshot.theta, task, x);

    const bool kernel_kind = is_kernel_kind(baseline.kind);
    std::vector<int> lookback;
    if (kernel_kind) {
        lookback = kae_lookbacks(snapshot, baseline, group_size);
        require_snapshots(snapshot, lookback);
    }

    std::vector<std::vector<double>> estimates(m, std::vector<double>(replications, 0.0));
    std::vector<double> agg_sq(replications, 0.0);
    for (int r = 0; r < replications; ++r) {
        RngStream rng = RngStream::derive(seed, "value_mse_rep", r);
        const HistoryStore rep_store =
            kernel_kind ? resample_history(snapshot, lookback, rng) : HistoryStore();
        const StepDraw draw = draw_step(snapshot.theta, task, group_size, rng);
        for (int x = 0; x < m; ++x) {
            const double est = slot_estimate(baseline, draw, rep_store, snapshot.iteration,
                                             truth, x, 0, group_size);
            estimates[x][r] = est;
            const double err = est - truth[x];
            agg_sq[r] += err * err / m;
        }
    }

    std::vector<MseRow> rows;
    rows.reserve(m + 1);
    double agg_mse = 0.0, agg_bias_sq = 0.0, agg_var = 0.0;
    for (int x = 0; x < m; ++x) {
        double mean_est = 0.0;
        for (double e : estimates[x]) mean_est += e;
        mean_est /= replications;
        double mse = 0.0, var = 0.0;
        std::vector<double> sq(replications);
        for (int r = 0; r < replications; ++r) {
            const double err = estimates[x][r] - truth[x];
            sq[r] = err * err;
            mse += sq[r] / replications;
            const double dev = estimates[x][r] - mean_est;
            var += dev * dev / replications;
        }
        const double bias = mean_est - truth[x];
        rows.push_back(MseRow{snapshot.iteration, label, std::to_string(x), mse, bias * bias,
                              var, sample_se(sq), replications});
        agg_mse += mse / m;
        agg_bias_sq += bias * bias / m;
        agg_var += var / m;
    }
    rows.push_back(MseRow{snapshot.iteration, label, "all", agg_mse, agg_bias_sq, agg_var,
                          sample_se(agg_sq), replications});
    return rows;
}

MseRow grad_mse(const FrozenSnapshot& snapshot, const BaselineSpec& baseline, int group_size,
                int replications, std::uint64_t seed, const std::string& algorithm_label) {
    const TaskSet& task = snapshot.task;
    check_compatible(snapshot.theta, task);
    if (replications < 2) {
        throw Error(Errc::malformed_input, "an MSE needs at least 2 replications");
    }
    if (group_size < 1) {
        throw Error(Errc::degenerate_group, "group size must be >= 1");
    }
    const int m = task.prompt_count();
    const std::string label =
        algorithm_label.empty() ? baseline_kind_name(baseline.kind) : algorithm_label;

    std::vector<double> truth(m);
    for (int x = 0; x < m; ++x) truth[x] = exact_value(snapshot.theta, task, x);
    const std::vector<double> target = exact_gradient(snapshot.theta, task);

    const bool kernel_kind = is_kernel_kind(baseline.kind);
    std::vector<int> lookback;
    if (kernel_kind) {
        lookback = kae_lookbacks(snapshot, baseline, group_size);
        require_snapshots(snapshot, lookback);
    }

    const int dim = snapshot.theta.dimension();
    const double sample_scale = 1.0 / (static_cast<double>(m) * group_size);
    std::vector<std::vector<double>> grads;
    grads.reserve(replications);
    std::vector<double> sq_err(replications, 0.0);
    for (int r = 0; r < replications; ++r) {
        RngStream rng = RngStream::derive(seed, "grad_mse_rep", r);
        const HistoryStore rep_store =
            kernel_kind ? resample_history(snapshot, lookback, rng) : HistoryStore();
        const StepDraw draw = draw_step(snapshot.theta, task, group_size, rng);
        std::vector<double> grad(dim, 0.0);
        for (int x = 0; x < m; ++x) {
            const bool normalize =
                baseline.std_normalize && baseline.kind == BaselineKind::group_mean_loo;
            const double spread = normalize ? group_reward_std(draw.rewards[x]) : 0.0;
            for (int g = 0; g < group_size; ++g) {
                const double v = slot_estimate(baseline, draw, rep_store, snapshot.iteration,
                                               truth, x, g, group_size);
                double a = advantage(draw.rewards[x][g], v);
                if (normalize) a /= (spread + 1e-8);
                snapshot.theta.accumulate_score(x, draw.completions[x][g], a * sample_scale,
                                                grad);
            }
        }
        double err_sq = 0.0;
        for (int d = 0; d < dim; ++d) {
            const double diff = grad[d] - target[d];
            err_sq += diff * diff;
        }
        sq_err[r] = err_sq;
        grads.push_back(std::move(grad));
    }

    double mse = 0.0;
    for (double e : sq_err) mse += e;
    mse /= replications;

    std::vector<double> mean_grad(dim, 0.0);
    for (const auto& grad : grads) {
        for (int d = 0; d < dim; ++d) mean_grad[d] += grad[d] / replications;
    }
    double bias_sq = 0.0;
    for (int d = 0; d < dim; ++d) {
        const double diff = mean_grad[d] - target[d];
        bias_sq += diff * diff;
    }
    double variance = 0.0;
    for (const auto& grad : grads) {
        double dev_sq = 0.0;
        for (int d = 0; d < dim; ++d) {
            const double dev = grad[d] - mean_grad[d];
            dev_sq += dev * dev;
        }
        variance += dev_sq / replications;
    }

    return MseRow{snapshot.iteration, label, "all", mse, bias_sq, variance, sample_se(sq_err),
                  replications};
}

std::vector<SweepRow> sweep_bandwidth(const FrozenSnapshot& snapshot,
                                      const std::vector<KernelSpec>& kernels,
                                      const std::vector<BandwidthRule>& grid, int group_size,
                                      int replications, std::uint64_t seed) {
    if (kernels.empty() || grid.empty()) {
        throw Error(Errc::malformed_input, "a sweep needs at least one kernel and one bandwidth");
    }
    std::vector<SweepRow> rows;
    rows.reserve(kernels.size() * grid.size() + 2);
    for (const KernelSpec& kernel : kernels) {
        for (const BandwidthRule& rule : grid) {
            BaselineSpec spec;
            spec.kind = BaselineKind::kae_nw;
            spec.kernel = kernel;
            spec.bandwidth = rule;
            const MseRow agg = value_mse(snapshot, spec, group_size, replications, seed).back();
            rows.push_back(
                SweepRow{kernel_kind_name(kernel.kind()), bandwidth_value(rule), agg.mse, agg.se});
        }
    }
    for (const auto& [kind, name] :
         {std::pair<BaselineKind, const char*>{BaselineKind::group_mean_loo, "grpo"},
          std::pair<BaselineKind, const char*>{BaselineKind::batch_mean_loo, "rpp"}}) {
        BaselineSpec spec;
        spec.kind = kind;
        const MseRow agg = value_mse(snapshot, spec, group_size, replications, seed).back();
        rows.push_back(SweepRow{name, 0.0, agg.mse, agg.se});
    }
    return rows;
}

}  // namespace kae
