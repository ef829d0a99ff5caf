#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "kae/experiment.hpp"
#include "testing.hpp"

using namespace kae;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "kae_experiment_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    REQUIRE(file);
    return std::string(std::istreambuf_iterator<char>(file), {});
}

// A train pipeline small enough for tests to run many times.
ExperimentConfig tiny_train_config(const std::filesystem::path& out) {
    ExperimentConfig config = parse_experiment_text(
        "pipeline = train\n"
        "task.prompts = 4\n"
        "train.steps = 3\n"
        "train.batch = 2\n"
        "train.group = 2\n"
        "algorithms = kae,grpo\n"
        "run.seeds = 1,2\n",
        "tiny");
    config.out_dir = out;
    return config;
}

}  // namespace

TEST_CASE("config text parses keys, comments, and overrides") {
    const ExperimentConfig config = parse_experiment_text(
        "# a comment line\n"
        "pipeline = train   # trailing comment\n"
        "\n"
        "train.steps = 5\n"
        "train.steps = 9\n"  // later assignment wins
        "train.lr = inverse\n"
        "train.lr_value = 2.5\n"
        "baseline.kernel = exponential\n"
        "baseline.rho = 0.25\n"
        "run.seeds = 7, 8\n",
        "text");
    CHECK(config.pipeline == Pipeline::train);
    CHECK(config.steps == 9);
    CHECK(config.lr.kind == LrSchedule::Kind::inverse);
    CHECK(config.lr.value == 2.5);
    CHECK(config.kae_spec.kernel.kind() == KernelKind::exponential);
    CHECK(config.kae_spec.kernel.rho() == 0.25);
    CHECK(config.seeds == std::vector<std::uint64_t>{7, 8});
    CHECK(config.batch_size == 4);  // untouched default
}

TEST_CASE("config errors carry origin and line") {
    auto message_of = [](const std::string& text) {
        try {
            parse_experiment_text(text, "bad.cfg");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::config_error);
            return std::string(e.what());
        }
        FAIL("expected a config error");
        return std::string();
    };
    CHECK(message_of("train.steps 9\n").find("bad.cfg:1") != std::string::npos);
    CHECK(message_of("\nnot.a.key = 1\n").find("bad.cfg:2") != std::string::npos);
    CHECK(message_of("train.steps = soon\n").find("train.steps") != std::string::npos);
    CHECK(message_of("pipeline = bake\n").find("expected") != std::string::npos);
    CHECK(message_of("preset = mystery\n").find("mystery") != std::string::npos);

    CHECK(error_code_of([] { parse_experiment("/nonexistent/kae.cfg"); }) == Errc::config_error);
}

TEST_CASE("presets load defaults under the file's keys") {
    const ExperimentConfig table = parse_experiment_text("preset = value_mse_table\n", "p");
    CHECK(table.pipeline == Pipeline::value_mse);
    CHECK(table.steps == 50);
    CHECK(table.batch_size == 16);
    CHECK(table.group_size == 4);
    CHECK(table.schedule == ScheduleKind::block_reuse);
    CHECK(table.reuse_length == 10);
    CHECK(table.algorithms == std::vector<std::string>{"kae", "grpo", "rpp"});
    CHECK(table.kae_spec.bandwidth.kind == BandwidthRule::Kind::fixed_window);
    CHECK(table.kae_spec.bandwidth.window == 4);
    CHECK(table.replications == 1000);

    const ExperimentConfig overlaid = parse_experiment_text(
        "preset = value_mse_table\n"
        "train.steps = 7\n"
        "eval.step = 7\n",
        "p");
    CHECK(overlaid.steps == 7);
    CHECK(overlaid.batch_size == 16);  // still the preset's

    for (const std::string& name : known_presets()) {
        const ExperimentConfig config =
            parse_experiment_text("preset = " + name + "\n", "p");
        CHECK(config.preset == name);
        config.validate();
    }
}

TEST_CASE("render_config round-trips through the parser") {
    ExperimentConfig config = parse_experiment_text(
        "preset = bandwidth_sweep\n"
        "train.lr_value = 0.37\n"
        "baseline.kernel = higher_order\n"
        "baseline.order = 2\n"
        "train.retention = 12\n"
        "train.snapshots = 0,25,50\n",
        "r");
    const std::string rendered = render_config(config);
    const ExperimentConfig back = parse_experiment_text(rendered, "rendered");
    CHECK(render_config(back) == rendered);
    CHECK(back.retention == 12);
    CHECK(back.snapshot_steps == std::vector<int>{0, 25, 50});
    CHECK(back.kae_spec.kernel.kind() == KernelKind::higher_order);
}

TEST_CASE("config validation catches cross-field mistakes") {
    auto base = [] { return parse_experiment_text("task.prompts = 4\ntrain.batch = 2\n", "v"); };

    ExperimentConfig config = base();
    config.seeds = {3, 3};
    CHECK(error_code_of([&] { config.validate(); }) == Errc::config_error);

    config = base();
    config.algorithms = {"sarsa"};
    CHECK(error_code_of([&] { config.validate(); }) == Errc::config_error);

    config = base();
    config.batch_size = 9;  // exceeds task.prompts
    CHECK(error_code_of([&] { config.validate(); }) == Errc::config_error);

    config = base();
    config.pipeline = Pipeline::oneshot;
    CHECK(error_code_of([&] { config.validate(); }) == Errc::config_error);

    config = base();
    config.pipeline = Pipeline::sweep;
    CHECK(error_code_of([&] { config.validate(); }) == Errc::config_error);

    config = base();
    config.pipeline = Pipeline::value_mse;
    config.replications = 1;
    CHECK(error_code_of([&] { config.validate(); }) == Errc::config_error);
}

TEST_CASE("the algorithm table assigns baselines, schedules, and shapes") {
    const ExperimentConfig config = parse_experiment_text(
        "task.prompts = 8\ntrain.batch = 4\ntrain.group = 4\ntrain.schedule = block_reuse\n",
        "a");

    CHECK(resolve_algorithm("kae", config).spec.kind == BaselineKind::kae_nw);
    CHECK(resolve_algorithm("kae", config).schedule == ScheduleKind::block_reuse);
    CHECK(resolve_algorithm("kae_alg1", config).spec.kind == BaselineKind::kae_alg1);

    const AlgorithmPlan grpo = resolve_algorithm("grpo", config);
    CHECK(grpo.spec.kind == BaselineKind::group_mean_loo);
    CHECK(grpo.schedule == ScheduleKind::iid_without_replacement);
    CHECK(resolve_algorithm("grpo_schedule", config).schedule == ScheduleKind::block_reuse);

    CHECK(resolve_algorithm("rpp", config).spec.kind == BaselineKind::batch_mean_loo);

    const AlgorithmPlan reinforce = resolve_algorithm("reinforce", config);
    CHECK(reinforce.spec.kind == BaselineKind::zero);
    CHECK(reinforce.group_size == 1);
    CHECK(reinforce.batch_size == 8);  // min(4*4, 8): matched budget, capped at m

    CHECK(resolve_algorithm("oracle", config).spec.kind == BaselineKind::oracle);
    CHECK(error_code_of([&] { resolve_algorithm("sarsa", config); }) == Errc::config_error);
}

TEST_CASE("train pipeline writes curves, resolved config, and manifest") {
    const auto out = scratch_dir("train_pipeline");
    const ExperimentConfig config = tiny_train_config(out);
    const RunArtifacts artifacts = run_experiment(config);

    CHECK(artifacts.dir == out);
    for (const char* name : {"resolved.cfg", "train_curve.csv", "manifest.json"}) {
        CHECK(std::filesystem::exists(out / name));
    }

    const CsvTable curve = read_csv(out / "train_curve.csv");
    CHECK(curve.header ==
          std::vector<std::string>{"step", "seed", "algorithm", "mean_train_reward", "exact_J",
                                   "grad_norm", "lr"});
    // 2 algorithms x 2 seeds x (3 step rows + 1 terminal row)
    CHECK(curve.rows.size() == 2 * 2 * 4);

    // the resolved config is itself runnable and reproduces the CSV
    const std::string first = slurp(out / "train_curve.csv");
    const std::string manifest_first = slurp(out / "manifest.json");
    ExperimentConfig again = parse_experiment(out / "resolved.cfg");
    CHECK(again.preset.empty());
    run_experiment(again);
    CHECK(slurp(out / "train_curve.csv") == first);
    CHECK(slurp(out / "manifest.json") == manifest_first);
}

TEST_CASE("parallel dispatch does not change the artifacts") {
    const auto serial_dir = scratch_dir("parallel_a");
    const auto parallel_dir = scratch_dir("parallel_b");
    ExperimentConfig config = tiny_train_config(serial_dir);
    run_experiment(config);
    config.out_dir = parallel_dir;
    config.parallel = 4;
    run_experiment(config);
    CHECK(slurp(serial_dir / "train_curve.csv") == slurp(parallel_dir / "train_curve.csv"));
}

TEST_CASE("mse pipelines emit the documented tables") {
    const auto out = scratch_dir("value_mse_pipeline");
    ExperimentConfig config = parse_experiment_text(
        "pipeline = value-mse\n"
        "task.prompts = 4\n"
        "train.steps = 6\n"
        "train.batch = 4\n"
        "train.group = 4\n"
        "algorithms = kae,grpo\n"
        "eval.replications = 25\n",
        "mse");
    config.out_dir = out;
    run_experiment(config);

    const CsvTable table = read_csv(out / "value_mse.csv");
    CHECK(table.header ==
          std::vector<std::string>{"step", "algorithm", "prompt", "mse", "bias_sq", "variance",
                                   "replications"});
    CHECK(table.rows.size() == 2 * 5);  // two algorithms x (4 prompts + "all")
    CHECK(table.rows[0][0] == "6");

    config.pipeline = Pipeline::grad_mse;
    config.out_dir = scratch_dir("grad_mse_pipeline");
    run_experiment(config);
    const CsvTable grad = read_csv(config.out_dir / "grad_mse.csv");
    CHECK(grad.header ==
          std::vector<std::string>{"step", "algorithm", "mse", "se", "replications"});
    CHECK(grad.rows.size() == 2);

    config.pipeline = Pipeline::sweep;
    config.sweep_kernels = {"triangular"};
    config.sweep_windows = {2, 4};
    config.out_dir = scratch_dir("sweep_pipeline");
    run_experiment(config);
    const CsvTable sweep = read_csv(config.out_dir / "sweep.csv");
    CHECK(sweep.header == std::vector<std::string>{"kernel", "bandwidth", "mse", "se"});
    CHECK(sweep.rows.size() == 1 * 2 + 2);
}

TEST_CASE("compare_runs summarizes runs against a reference") {
    const auto out = scratch_dir("compare_train");
    run_experiment(tiny_train_config(out));

    const CsvTable table = compare_runs({out}, CompareMetric::exact_j, "grpo");
    CHECK(table.header ==
          std::vector<std::string>{"algorithm", "step", "mean", "se", "runs", "reduction_pct"});
    REQUIRE(table.rows.size() == 2);
    for (const auto& row : table.rows) {
        CHECK(row[1] == "3");  // final step
        CHECK(row[4] == "2");  // two seeds
        if (row[0] == "grpo") CHECK(row[5] == "0");
    }

    // the same run twice: means identical, reference reduction still 0
    const CsvTable doubled = compare_runs({out, out}, CompareMetric::exact_j, "grpo");
    CHECK(doubled.rows[0][4] == "4");

    CHECK(error_code_of([&] { compare_runs({}, CompareMetric::exact_j, "grpo"); }) ==
          Errc::mismatched_runs);
    CHECK(error_code_of([&] { compare_runs({out}, CompareMetric::exact_j, "sarsa"); }) ==
          Errc::config_error);

    const auto other = scratch_dir("compare_other_task");
    ExperimentConfig mismatched = tiny_train_config(other);
    mismatched.task.prompt_count = 8;
    run_experiment(mismatched);
    CHECK(error_code_of([&] {
              compare_runs({out, other}, CompareMetric::exact_j, "grpo");
          }) == Errc::mismatched_runs);
}

TEST_CASE("compare_runs reads mse artifacts") {
    const auto out = scratch_dir("compare_mse");
    ExperimentConfig config = parse_experiment_text(
        "pipeline = value-mse\n"
        "task.prompts = 4\n"
        "train.steps = 5\n"
        "train.batch = 4\n"
        "train.group = 4\n"
        "algorithms = kae,grpo\n"
        "eval.replications = 30\n",
        "cmp");
    config.out_dir = out;
    run_experiment(config);

    const CsvTable table = compare_runs({out}, CompareMetric::value_mse, "grpo");
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0][0] == "kae");
    CHECK(table.rows[0][1] == "5");
}

TEST_CASE("environment overrides") {
    ExperimentConfig config;
    setenv("KAE_OUT", "/tmp/kae_env_out", 1);
    setenv("KAE_PARALLEL", "3", 1);
    apply_env_overrides(config);
    CHECK(config.out_dir == std::filesystem::path("/tmp/kae_env_out"));
    CHECK(config.parallel == 3);

    setenv("KAE_PARALLEL", "three", 1);
    CHECK(error_code_of([&] { apply_env_overrides(config); }) == Errc::config_error);
    unsetenv("KAE_OUT");
    unsetenv("KAE_PARALLEL");
}
