#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "kae/experiment.hpp"

namespace {

// Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const kae::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == kae::Errc::numerical_failure ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

void print_table(const kae::CsvTable& table) {
    auto emit = [](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) std::cout << ',';
            std::cout << fields[i];
        }
        std::cout << '\n';
    };
    emit(table.header);
    for (const auto& row : table.rows) emit(row);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Kernelized-advantage-estimation benchmark harness: config-driven\n"
        "training runs and frozen-snapshot MSE studies, CSV artifacts only."};
    app.require_subcommand(1);

    std::string run_config;
    std::string out_override;
    int parallel_override = 0;
    CLI::App* run = app.add_subcommand("run", "execute a config's pipeline");
    run->add_option("config", run_config, "experiment config file")->required();
    run->add_option("--out", out_override, "output directory (beats KAE_OUT and the config)");
    run->add_option("--parallel", parallel_override,
                    "worker threads for independent runs (beats KAE_PARALLEL)");

    std::string validate_config;
    CLI::App* validate = app.add_subcommand("validate", "parse and check a config, run nothing");
    validate->add_option("config", validate_config, "experiment config file")->required();

    std::vector<std::string> compare_dirs;
    std::string metric_name = "value_mse";
    std::string reference = "grpo";
    CLI::App* compare =
        app.add_subcommand("compare", "summarize finished runs against a reference algorithm");
    compare->add_option("dirs", compare_dirs, "run output directories")->required();
    compare->add_option("--metric", metric_name, "exact_J | value_mse | grad_mse");
    compare->add_option("--reference", reference, "algorithm the reduction column is against");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (run->parsed()) {
        return guarded([&] {
            kae::ExperimentConfig config = kae::parse_experiment(run_config);
            kae::apply_env_overrides(config);
            if (!out_override.empty()) config.out_dir = out_override;
            if (parallel_override > 0) config.parallel = parallel_override;
            const kae::RunArtifacts artifacts = kae::run_experiment(config);
            for (const std::string& file : artifacts.files) {
                std::cout << "wrote " << (artifacts.dir / file).string() << "\n";
            }
        });
    }
    if (validate->parsed()) {
        return guarded([&] {
            kae::ExperimentConfig config = kae::parse_experiment(validate_config);
            kae::apply_env_overrides(config);
            config.validate();
            std::cout << "ok: " << validate_config << " ("
                      << kae::pipeline_name(config.pipeline) << " pipeline)\n";
        });
    }
    return guarded([&] {
        std::vector<std::filesystem::path> dirs(compare_dirs.begin(), compare_dirs.end());
        print_table(
            kae::compare_runs(dirs, kae::compare_metric_from(metric_name), reference));
    });
}
