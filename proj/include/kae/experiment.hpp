#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kae/csv.hpp"
#include "kae/env.hpp"
#include "kae/trainer.hpp"

namespace kae {

inline constexpr const char* kArtifactVersion = "0.1.0";

// The experiment families. train/oneshot/ablation share the training
// body (per-algorithm, per-seed runs into train_curve.csv); the other
// three freeze one training run and replicate estimators at the frozen
// step.
enum class Pipeline { train, value_mse, grad_mse, sweep, oneshot, ablation };

const char* pipeline_name(Pipeline pipeline);

// A config file fully resolved: preset defaults applied, every field
// explicit. Produced by parse_experiment; rendered back out verbatim as
// the run's resolved.cfg.
struct ExperimentConfig {
    Pipeline pipeline = Pipeline::train;
    std::string preset;  // empty for handwritten configs

    TaskParams task;

    // shared trainer knobs; the algorithm table overrides schedule and
    // shapes per algorithm (see resolve_algorithm)
    std::string train_algorithm = "kae";  // generates the frozen snapshot
    int steps = 50;
    int batch_size = 4;
    int group_size = 4;
    ScheduleKind schedule = ScheduleKind::block_reuse;
    int reuse_length = 10;
    LrSchedule lr = LrSchedule::constant(0.5);
    std::optional<int> retention;  // unset keeps all history
    std::vector<int> snapshot_steps;

    BaselineSpec kae_spec;  // kernel + bandwidth for the kae algorithms
    double rho = 0.5;       // exponential kernel decay, kept for sweeps
    int kernel_order = 2;   // higher_order kernel order, likewise

    std::vector<std::string> algorithms{"kae"};
    std::vector<std::uint64_t> seeds{101};

    // evaluation knobs, mse pipelines only
    int eval_step = -1;   // -1: the final training step
    int eval_group = -1;  // -1: group_size
    int replications = 500;
    std::vector<std::string> sweep_kernels;
    std::vector<int> sweep_windows;

    std::filesystem::path out_dir = "out";
    int parallel = 1;

    void validate() const;  // config-error on inconsistent combinations
};

// How one named algorithm trains and evaluates. The table:
//
//   name                baseline        schedule      shapes
//   kae                 kae_nw          config        B, G
//   kae_alg1            kae_alg1        config        B, G
//   grpo                group_mean_loo  iid           B, G
//   grpo_schedule       group_mean_loo  block_reuse   B, G
//   rpp                 batch_mean_loo  iid           B, G
//   rpp_schedule        batch_mean_loo  block_reuse   B, G
//   reinforce           zero            iid           min(B*G, m), 1
//   reinforce_schedule  zero            block_reuse   min(B*G, m), 1
//   oracle              oracle          iid           B, G
//
// reinforce folds the whole completion budget into its batch so
// comparisons hold the samples-per-step fixed.
struct AlgorithmPlan {
    std::string name;
    BaselineSpec spec;
    ScheduleKind schedule = ScheduleKind::iid_without_replacement;
    int batch_size = 1;
    int group_size = 1;

    TrainConfig train_config(const ExperimentConfig& config, std::uint64_t seed) const;
};

AlgorithmPlan resolve_algorithm(const std::string& name, const ExperimentConfig& config);

const std::vector<std::string>& known_algorithms();
const std::vector<std::string>& known_presets();

// Parses the flat `section.key = value` format: one assignment per
// line, `#` comments, a `preset = NAME` line loads that preset's
// defaults before the file's other keys overlay them. Errors carry
// origin:line. See render_config for the full key set.
ExperimentConfig parse_experiment_text(const std::string& text, const std::string& origin);
ExperimentConfig parse_experiment(const std::filesystem::path& path);

// Every key, explicit, in canonical order; parsing the result
// reproduces `config` exactly.
std::string render_config(const ExperimentConfig& config);

// KAE_OUT replaces out_dir; KAE_PARALLEL replaces parallel.
void apply_env_overrides(ExperimentConfig& config);

struct RunArtifacts {
    std::filesystem::path dir;
    std::vector<std::string> files;  // relative to dir, in write order
};

// Executes the configured pipeline into out_dir: resolved.cfg, the
// pipeline's CSVs, any policy checkpoints, then manifest.json. Rerunning
// the same resolved config rewrites byte-identical artifacts.
RunArtifacts run_experiment(const ExperimentConfig& config);

enum class CompareMetric { exact_j, value_mse, grad_mse };

CompareMetric compare_metric_from(const std::string& name);

// Cross-run summary: one row per (algorithm, step) with the metric's
// mean and standard error across runs/seeds and the percentage
// reduction (reference - algorithm)/reference versus the named
// reference algorithm. Runs must share a task; an empty dir list or a
// task mismatch signals mismatched-runs.
CsvTable compare_runs(const std::vector<std::filesystem::path>& dirs, CompareMetric metric,
                      const std::string& reference);

}  // namespace kae
