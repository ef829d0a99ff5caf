#include "kae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kae {

LrSchedule LrSchedule::constant(double eta) {
    if (!(eta > 0.0)) {
        throw Error(Errc::config_error, "constant learning rate needs eta > 0");
    }
    return LrSchedule{Kind::constant, eta};
}

LrSchedule LrSchedule::inverse(double beta) {
    if (!(beta > 0.0)) {
        throw Error(Errc::config_error, "inverse learning rate needs beta > 0");
    }
    return LrSchedule{Kind::inverse, beta};
}

double LrSchedule::at(int iteration) const {
    if (iteration < 0) {
        throw Error(Errc::config_error, "negative iteration");
    }
    return kind == Kind::constant ? value : value / (iteration + 1);
}

void TrainConfig::validate(const TaskSet& task) const {
    if (steps < 0) {
        throw Error(Errc::config_error, "steps must be >= 0");
    }
    if (batch_size < 1 || batch_size > task.prompt_count()) {
        throw Error(Errc::config_error, "batch size must satisfy 1 <= B <= m");
    }
    if (group_size < 1) {
        throw Error(Errc::config_error, "group size must be >= 1");
    }
    if (schedule_kind == ScheduleKind::block_reuse && reuse_length < 1) {
        throw Error(Errc::config_error, "block reuse length J must be >= 1");
    }
    if (!(lr.value > 0.0)) {
        throw Error(Errc::config_error, "learning rate must be positive");
    }
    if (baseline.kind == BaselineKind::kae_alg1 &&
        baseline.bandwidth.kind != BandwidthRule::Kind::fixed) {
        throw Error(Errc::unsupported_normalization,
                    "Algorithm 1 normalization needs the fixed bandwidth rule");
    }
    if (retention && *retention < 1) {
        throw Error(Errc::config_error, "history retention must be >= 1 when set");
    }
    for (int s : snapshot_steps) {
        if (s < 0 || s > steps) {
            throw Error(Errc::config_error, "snapshot step " + std::to_string(s) +
                                                " outside [0, " + std::to_string(steps) + "]");
        }
    }
}

TrainState init_state(const TrainConfig& config, const TaskSet& task) {
    config.validate(task);
    const SamplingSchedule schedule =
        config.schedule_kind == ScheduleKind::block_reuse
            ? SamplingSchedule::block(task.prompt_count(), config.batch_size,
                                      config.reuse_length)
            : SamplingSchedule::iid(task.prompt_count(), config.batch_size);
    RngStream schedule_rng = RngStream::derive(config.seed, "schedule");
    RngStream completion_rng = RngStream::derive(config.seed, "completions");
    MinibatchSampler sampler(schedule, schedule_rng);
    HistoryStore store = config.retention ? HistoryStore(*config.retention) : HistoryStore();
    return TrainState{
        PolicyParams(task.prompt_count(), task.completion_length(), task.vocab_size()),
        std::move(store),
        0,
        std::move(sampler),
        std::move(schedule_rng),
        std::move(completion_rng)};
}

StepBatch draw_batch(TrainState& state, const TrainConfig& config, const TaskSet& task) {
    StepBatch batch;
    batch.prompts = state.sampler.next(state.schedule_rng);
    batch.completions.resize(batch.prompts.size());
    batch.rewards.resize(batch.prompts.size());
    for (std::size_t b = 0; b < batch.prompts.size(); ++b) {
        batch.completions[b] =
            state.theta.sample(batch.prompts[b], config.group_size, state.completion_rng);
        batch.rewards[b].reserve(config.group_size);
        for (const Completion& y : batch.completions[b]) {
            batch.rewards[b].push_back(task.reward(batch.prompts[b], y));
        }
    }
    return batch;
}

namespace {

bool is_fallback(Errc code) {
    return code == Errc::degenerate_group || code == Errc::degenerate_batch ||
           code == Errc::no_data;
}

}  // namespace

std::vector<double> estimate_gradient(const TrainState& state, const StepBatch& batch,
                                      const TrainConfig& config, const TaskSet& task,
                                      StepReport* out_report) {
    const int batch_count = static_cast<int>(batch.prompts.size());
    const int group = config.group_size;
    const BaselineSpec& baseline = config.baseline;

    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(batch_count) * group);
    for (const auto& rewards : batch.rewards) {
        flat.insert(flat.end(), rewards.begin(), rewards.end());
    }

    // Oracle values are per prompt, not per slot; compute them once.
    std::vector<double> oracle_values;
    if (baseline.kind == BaselineKind::oracle) {
        oracle_values.reserve(batch_count);
        for (PromptId x : batch.prompts) {
            oracle_values.push_back(exact_value(state.theta, task, x));
        }
    }

    int fallback_count = 0;
    auto slot_value = [&](int b, int g) -> double {
        try {
            switch (baseline.kind) {
                case BaselineKind::zero:
                    return 0.0;
                case BaselineKind::group_mean_loo:
                    return grpo_loo_value(batch.rewards[b], g);
                case BaselineKind::batch_mean_loo:
                    return rpp_batch_value(flat, b * group + g);
                case BaselineKind::kae_nw:
                case BaselineKind::kae_alg1:
                    return kae_value(state.store, batch.prompts[b], state.iteration,
                                     batch.rewards[b], g, baseline.kernel, baseline.bandwidth,
                                     kae_mode_of(baseline.kind));
                case BaselineKind::oracle:
                    return oracle_values[b];
            }
            throw Error(Errc::config_error, "unknown baseline kind");
        } catch (const Error& e) {
            if (is_fallback(e.code())) {
                ++fallback_count;
                return 0.0;
            }
            throw;
        }
    };

    const double sample_scale = 1.0 / (static_cast<double>(batch_count) * group);
    std::vector<double> grad(state.theta.dimension(), 0.0);
    std::vector<double> baseline_means(batch_count, 0.0);
    for (int b = 0; b < batch_count; ++b) {
        const bool normalize =
            baseline.std_normalize && baseline.kind == BaselineKind::group_mean_loo;
        const double spread = normalize ? group_reward_std(batch.rewards[b]) : 0.0;
        for (int g = 0; g < group; ++g) {
            const double v = slot_value(b, g);
            baseline_means[b] += v / group;
            double a = advantage(batch.rewards[b][g], v);
            if (normalize) a /= (spread + 1e-8);
            state.theta.accumulate_score(batch.prompts[b], batch.completions[b][g],
                                         a * sample_scale, grad);
        }
    }
    if (out_report != nullptr) {
        out_report->baseline_means = std::move(baseline_means);
        out_report->fallback_count = fallback_count;
    }
    return grad;
}

StepReport step(TrainState& state, const TrainConfig& config, const TaskSet& task) {
    StepReport report;
    report.iteration = state.iteration;
    report.lr = config.lr.at(state.iteration);
    report.exact_objective = exact_objective(state.theta, task);

    const StepBatch batch = draw_batch(state, config, task);
    report.prompts = batch.prompts;
    double reward_sum = 0.0;
    int reward_count = 0;
    for (const auto& rewards : batch.rewards) {
        for (double z : rewards) {
            reward_sum += z;
            ++reward_count;
        }
    }
    report.mean_train_reward = reward_sum / reward_count;

    const std::vector<double> grad = estimate_gradient(state, batch, config, task, &report);
    double norm_sq = 0.0;
    for (double g : grad) {
        if (!std::isfinite(g)) {
            throw Error(Errc::numerical_failure,
                        "non-finite gradient at iteration " + std::to_string(state.iteration));
        }
        norm_sq += g * g;
    }
    report.grad_norm = std::sqrt(norm_sq);

    state.theta.apply_step(grad, report.lr);
    // Line 14: the step's own rewards join the history only after the
    // update, under the pre-update iteration index.
    for (std::size_t b = 0; b < batch.prompts.size(); ++b) {
        state.store.record(batch.prompts[b], state.iteration, batch.rewards[b]);
    }
    state.iteration += 1;
    return report;
}

RunRecord train(const TrainConfig& config, const TaskSet& task) {
    TrainState state = init_state(config, task);
    RunRecord run{config, {}, {}, HistoryStore()};
    run.reports.reserve(config.steps);
    run.policies.reserve(config.steps + 1);
    run.policies.push_back(state.theta);
    for (int i = 0; i < config.steps; ++i) {
        run.reports.push_back(step(state, config, task));
        run.policies.push_back(state.theta);
    }
    run.store = std::move(state.store);
    return run;
}

FrozenSnapshot snapshot_at(const RunRecord& run, const TaskSet& task, int step, int lookback) {
    const int n = static_cast<int>(run.policies.size()) - 1;
    if (step < 0 || step > n) {
        throw Error(Errc::malformed_input,
                    "snapshot step " + std::to_string(step) + " outside [0, " +
                        std::to_string(n) + "]");
    }
    FrozenSnapshot snap{run.policies[step], HistoryStore(), step, task, {}};
    for (int x = 0; x < task.prompt_count(); ++x) {
        for (const RewardRecord& rec : run.store.records(x)) {
            if (rec.iteration < step) snap.store.record(x, rec.iteration, rec.rewards);
        }
    }
    const int first = lookback < 0 ? 0 : std::max(0, step - lookback);
    for (int it = first; it < step; ++it) {
        snap.past_policies.emplace(it, run.policies[it]);
    }
    return snap;
}

}  // namespace kae
