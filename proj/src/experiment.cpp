#include "kae/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "kae/eval.hpp"

namespace kae {

namespace {

std::string trim(const std::string& text) {
    std::size_t begin = text.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    std::size_t end = text.find_last_not_of(" \t");
    return text.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

long long to_integer(const std::string& field, const std::string& context) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const long long value = std::strtoll(begin, &end, 10);
    if (end == begin || *end != '\0') {
        throw Error(Errc::config_error, context + ": not an integer: \"" + field + "\"");
    }
    return value;
}

// One parsed assignment. Presets preload entries at line 0; file lines
// overwrite them, so the file always wins and unknown-key reporting can
// still point at a real line.
struct RawEntry {
    std::string value;
    int line = 0;
    bool used = false;
};

class KeyMap {
  public:
    explicit KeyMap(std::string origin) : origin_(std::move(origin)) {}

    void set(const std::string& key, const std::string& value, int line) {
        entries_[key] = RawEntry{value, line, false};
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string context(const std::string& key) {
        const auto it = entries_.find(key);
        const int line = it == entries_.end() ? 0 : it->second.line;
        return origin_ + ":" + std::to_string(line) + ": " + key;
    }

    std::string take_str(const std::string& key, const std::string& fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        return it->second.value;
    }

    int take_int(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        const long long value = to_integer(take_str(key, ""), context(key));
        if (value < INT_MIN || value > INT_MAX) {
            throw Error(Errc::config_error, context(key) + ": out of range");
        }
        return static_cast<int>(value);
    }

    double take_real(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        return parse_double(take_str(key, ""), context(key));
    }

    bool take_bool(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const std::string value = take_str(key, "");
        if (value == "true") return true;
        if (value == "false") return false;
        throw Error(Errc::config_error, context(key) + ": expected true or false");
    }

    std::vector<std::string> take_list(const std::string& key,
                                       const std::vector<std::string>& fallback) {
        if (!has(key)) return fallback;
        return split_list(take_str(key, ""));
    }

    // Interprets `key` against a closed set of spellings.
    template <typename T>
    T take_enum(const std::string& key, T fallback,
                const std::vector<std::pair<std::string, T>>& table) {
        if (!has(key)) return fallback;
        const std::string value = take_str(key, "");
        for (const auto& [name, item] : table) {
            if (name == value) return item;
        }
        std::string expected;
        for (const auto& [name, item] : table) {
            if (!expected.empty()) expected += " | ";
            expected += name;
        }
        throw Error(Errc::config_error,
                    context(key) + ": unknown value \"" + value + "\" (expected " + expected + ")");
    }

    void finish() const {
        for (const auto& [key, entry] : entries_) {
            if (!entry.used) {
                throw Error(Errc::config_error, origin_ + ":" + std::to_string(entry.line) +
                                                    ": unknown key \"" + key + "\"");
            }
        }
    }

  private:
    std::string origin_;
    std::map<std::string, RawEntry> entries_;
};

// Preset deltas over the struct defaults, in config-file vocabulary so
// resolved.cfg and presets share one spelling of every knob. The
// learning rates are the tuned desk-scale constants; see README.
std::vector<std::pair<std::string, std::string>> preset_defaults(const std::string& name) {
    using KV = std::vector<std::pair<std::string, std::string>>;
    const KV frozen_snapshot = {
        {"task.kind", "needle"},      {"task.prompts", "16"},
        {"task.vocab", "4"},          {"task.length", "3"},
        {"task.answers", "4"},        {"task.seed", "20240901"},
        {"train.algorithm", "kae"},   {"train.steps", "50"},
        {"train.batch", "16"},        {"train.group", "4"},
        {"train.schedule", "block_reuse"}, {"train.reuse", "10"},
        {"train.lr", "inverse"},      {"train.lr_value", "160"},
        {"baseline.kernel", "triangular"}, {"baseline.bandwidth", "fixed_window"},
        {"baseline.window", "4"},     {"run.seeds", "101"},
        {"eval.step", "50"},          {"eval.group", "4"},
    };
    const KV policy_base = {
        {"task.kind", "needle"},      {"task.prompts", "16"},
        {"task.vocab", "4"},          {"task.length", "3"},
        {"task.answers", "4"},        {"task.seed", "20240901"},
        {"train.steps", "300"},       {"train.batch", "4"},
        {"train.group", "4"},         {"train.schedule", "block_reuse"},
        {"train.reuse", "10"},        {"train.lr", "inverse"},
        {"train.lr_value", "256"},    {"baseline.kernel", "triangular"},
        {"baseline.bandwidth", "fixed_window"}, {"baseline.window", "4"},
        {"run.seeds", "101,102,103,104,105"},
    };

    if (name == "value_mse_table") {
        KV kv = frozen_snapshot;
        kv.insert(kv.end(), {{"pipeline", "value-mse"},
                             {"algorithms", "kae,grpo,rpp"},
                             {"eval.replications", "1000"},
                             {"out.dir", "out/value_mse_table"}});
        return kv;
    }
    if (name == "grad_mse_table") {
        KV kv = frozen_snapshot;
        kv.insert(kv.end(), {{"pipeline", "grad-mse"},
                             {"algorithms", "kae,grpo,rpp,reinforce,oracle"},
                             {"eval.replications", "1000"},
                             {"out.dir", "out/grad_mse_table"}});
        return kv;
    }
    if (name == "bandwidth_sweep") {
        KV kv = frozen_snapshot;
        kv.insert(kv.end(), {{"pipeline", "sweep"},
                             {"eval.kernels", "triangular,exponential"},
                             {"eval.windows", "2,4,8"},
                             {"eval.replications", "600"},
                             {"out.dir", "out/bandwidth_sweep"}});
        return kv;
    }
    if (name == "policy_multistream") {
        KV kv = policy_base;
        kv.insert(kv.end(), {{"pipeline", "train"},
                             {"algorithms", "kae,grpo,rpp,reinforce"},
                             {"out.dir", "out/policy_multistream"}});
        return kv;
    }
    if (name == "policy_singlestream") {
        KV kv = policy_base;
        kv.insert(kv.end(), {{"pipeline", "ablation"},
                             {"train.group", "1"},
                             {"algorithms", "kae,reinforce,reinforce_schedule"},
                             {"out.dir", "out/policy_singlestream"}});
        return kv;
    }
    if (name == "oneshot") {
        KV kv = {
            {"pipeline", "oneshot"},   {"task.kind", "needle"},
            {"task.prompts", "1"},     {"task.vocab", "4"},
            {"task.length", "3"},      {"task.answers", "4"},
            {"task.seed", "20240901"}, {"train.steps", "200"},
            {"train.batch", "1"},      {"train.group", "4"},
            {"train.schedule", "block_reuse"}, {"train.reuse", "1"},
            {"train.lr", "inverse"},   {"train.lr_value", "8"},
            {"baseline.kernel", "triangular"}, {"baseline.bandwidth", "fixed_window"},
            {"baseline.window", "16"}, {"algorithms", "kae,grpo,oracle"},
            {"run.seeds", "101,102,103,104,105"}, {"out.dir", "out/oneshot"},
        };
        return kv;
    }
    throw Error(Errc::config_error, "unknown preset \"" + name + "\"");
}

KernelSpec kernel_from(const std::string& name, double rho, int order,
                       const std::string& context) {
    if (name == "triangular") return KernelSpec::triangular();
    if (name == "exponential") return KernelSpec::exponential(rho);
    if (name == "uniform") return KernelSpec::uniform();
    if (name == "epanechnikov") return KernelSpec::epanechnikov();
    if (name == "higher_order") return KernelSpec::higher_order(order);
    throw Error(Errc::config_error, context + ": unknown kernel \"" + name + "\"");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw Error(Errc::malformed_input, "cannot write " + path.string());
    }
    file << text;
    if (!file.flush()) {
        throw Error(Errc::malformed_input, "short write to " + path.string());
    }
}

void run_parallel(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                const std::lock_guard<std::mutex> hold(mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string hex64(std::uint64_t value) {
    char buffer[20];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

}  // namespace

const char* pipeline_name(Pipeline pipeline) {
    switch (pipeline) {
        case Pipeline::train: return "train";
        case Pipeline::value_mse: return "value-mse";
        case Pipeline::grad_mse: return "grad-mse";
        case Pipeline::sweep: return "sweep";
        case Pipeline::oneshot: return "oneshot";
        case Pipeline::ablation: return "ablation";
    }
    return "?";
}

const std::vector<std::string>& known_algorithms() {
    static const std::vector<std::string> names{
        "kae",       "kae_alg1",      "grpo",      "grpo_schedule",      "rpp",
        "rpp_schedule", "reinforce", "reinforce_schedule", "oracle"};
    return names;
}

const std::vector<std::string>& known_presets() {
    static const std::vector<std::string> names{"value_mse_table",    "grad_mse_table",
                                                "policy_multistream", "policy_singlestream",
                                                "bandwidth_sweep",    "oneshot"};
    return names;
}

AlgorithmPlan resolve_algorithm(const std::string& name, const ExperimentConfig& config) {
    AlgorithmPlan plan;
    plan.name = name;
    plan.spec = config.kae_spec;  // kernel/bandwidth/std_normalize carry over
    plan.schedule = config.schedule;
    plan.batch_size = config.batch_size;
    plan.group_size = config.group_size;

    const auto fixed_schedule = [&](ScheduleKind kind) { plan.schedule = kind; };
    if (name == "kae") {
        plan.spec.kind = BaselineKind::kae_nw;
    } else if (name == "kae_alg1") {
        plan.spec.kind = BaselineKind::kae_alg1;
    } else if (name == "grpo" || name == "grpo_schedule") {
        plan.spec.kind = BaselineKind::group_mean_loo;
        fixed_schedule(name == "grpo" ? ScheduleKind::iid_without_replacement
                                      : ScheduleKind::block_reuse);
    } else if (name == "rpp" || name == "rpp_schedule") {
        plan.spec.kind = BaselineKind::batch_mean_loo;
        fixed_schedule(name == "rpp" ? ScheduleKind::iid_without_replacement
                                     : ScheduleKind::block_reuse);
    } else if (name == "reinforce" || name == "reinforce_schedule") {
        plan.spec.kind = BaselineKind::zero;
        fixed_schedule(name == "reinforce" ? ScheduleKind::iid_without_replacement
                                           : ScheduleKind::block_reuse);
        plan.group_size = 1;  // matched completions budget: all of B*G as batch
        plan.batch_size = std::min(config.batch_size * config.group_size,
                                   config.task.prompt_count);
    } else if (name == "oracle") {
        plan.spec.kind = BaselineKind::oracle;
        fixed_schedule(ScheduleKind::iid_without_replacement);
    } else {
        throw Error(Errc::config_error, "unknown algorithm \"" + name + "\"");
    }
    return plan;
}

TrainConfig AlgorithmPlan::train_config(const ExperimentConfig& config,
                                        std::uint64_t seed) const {
    TrainConfig tc;
    tc.steps = config.steps;
    tc.batch_size = batch_size;
    tc.group_size = group_size;
    tc.baseline = spec;
    tc.schedule_kind = schedule;
    tc.reuse_length = config.reuse_length;
    tc.lr = config.lr;
    tc.seed = seed;
    tc.snapshot_steps = config.snapshot_steps;
    tc.retention = config.retention;
    return tc;
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) {
        throw Error(Errc::config_error, "run.seeds must name at least one seed");
    }
    std::vector<std::uint64_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(Errc::config_error, "run.seeds must be distinct");
    }
    if (parallel < 1) {
        throw Error(Errc::config_error, "run.parallel must be >= 1");
    }
    if (algorithms.empty()) {
        throw Error(Errc::config_error, "algorithms must name at least one algorithm");
    }

    TaskSet task_set = [&] {
        try {
            return make_task(task);
        } catch (const Error& e) {
            throw Error(Errc::config_error, std::string("task: ") + e.what());
        }
    }();

    for (const std::string& name : algorithms) {
        resolve_algorithm(name, *this).train_config(*this, seeds.front()).validate(task_set);
    }
    resolve_algorithm(train_algorithm, *this).train_config(*this, seeds.front()).validate(task_set);

    const bool mse_pipeline =
        pipeline == Pipeline::value_mse || pipeline == Pipeline::grad_mse ||
        pipeline == Pipeline::sweep;
    if (mse_pipeline) {
        if (replications < 2) {
            throw Error(Errc::config_error, "eval.replications must be >= 2");
        }
        if (eval_step >= 0 && eval_step > steps) {
            throw Error(Errc::config_error, "eval.step must lie in [0, train.steps]");
        }
        if (eval_group == 0 || eval_group < -1) {
            throw Error(Errc::config_error, "eval.group must be >= 1 (or -1 for train.group)");
        }
    }
    if (pipeline == Pipeline::sweep) {
        if (sweep_kernels.empty() || sweep_windows.empty()) {
            throw Error(Errc::config_error, "sweep needs eval.kernels and eval.windows");
        }
        for (int window : sweep_windows) {
            if (window < 1) {
                throw Error(Errc::config_error, "eval.windows entries must be >= 1");
            }
        }
        for (const std::string& name : sweep_kernels) {
            kernel_from(name, rho, kernel_order, "eval.kernels");
        }
    }
    if (pipeline == Pipeline::oneshot &&
        (task.prompt_count != 1 || batch_size != 1)) {
        throw Error(Errc::config_error, "oneshot is the m=1, B=1 regime");
    }
}

ExperimentConfig parse_experiment_text(const std::string& text, const std::string& origin) {
    KeyMap keys(origin);

    // first pass: find the preset so its defaults sit under the file's keys
    std::istringstream scan(text);
    std::string line;
    int line_no = 0;
    std::vector<std::tuple<std::string, std::string, int>> assignments;
    while (std::getline(scan, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(Errc::config_error, origin + ":" + std::to_string(line_no) +
                                                ": expected key = value, found \"" + line + "\"");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw Error(Errc::config_error,
                        origin + ":" + std::to_string(line_no) + ": empty key");
        }
        assignments.emplace_back(key, value, line_no);
    }
    for (const auto& [key, value, at] : assignments) {
        if (key == "preset") {
            for (const auto& [k, v] : preset_defaults(value)) keys.set(k, v, 0);
        }
    }
    for (const auto& [key, value, at] : assignments) keys.set(key, value, at);

    ExperimentConfig config;
    config.preset = keys.take_str("preset", "");
    config.pipeline = keys.take_enum<Pipeline>(
        "pipeline", Pipeline::train,
        {{"train", Pipeline::train},
         {"value-mse", Pipeline::value_mse},
         {"grad-mse", Pipeline::grad_mse},
         {"sweep", Pipeline::sweep},
         {"oneshot", Pipeline::oneshot},
         {"ablation", Pipeline::ablation}});
    config.out_dir = keys.take_str("out.dir", config.out_dir.string());

    {
        std::vector<std::string> fields =
            keys.take_list("run.seeds", {"101"});
        config.seeds.clear();
        for (const std::string& field : fields) {
            const char* begin = field.c_str();
            char* end = nullptr;
            const unsigned long long value = std::strtoull(begin, &end, 10);
            if (end == begin || *end != '\0') {
                throw Error(Errc::config_error,
                            keys.context("run.seeds") + ": not a seed: \"" + field + "\"");
            }
            config.seeds.push_back(value);
        }
    }
    config.parallel = keys.take_int("run.parallel", 1);

    config.task.kind = keys.take_enum<TaskKind>("task.kind", TaskKind::needle,
                                                {{"needle", TaskKind::needle},
                                                 {"parity", TaskKind::parity},
                                                 {"random_dense", TaskKind::random_dense}});
    config.task.prompt_count = keys.take_int("task.prompts", config.task.prompt_count);
    config.task.vocab_size = keys.take_int("task.vocab", config.task.vocab_size);
    config.task.completion_length = keys.take_int("task.length", config.task.completion_length);
    config.task.answers_per_prompt = keys.take_int("task.answers", config.task.answers_per_prompt);
    config.task.density = keys.take_real("task.density", config.task.density);
    {
        const std::string field =
            keys.take_str("task.seed", std::to_string(config.task.seed));
        const char* begin = field.c_str();
        char* end = nullptr;
        config.task.seed = std::strtoull(begin, &end, 10);
        if (end == begin || *end != '\0') {
            throw Error(Errc::config_error,
                        keys.context("task.seed") + ": not a seed: \"" + field + "\"");
        }
    }

    config.algorithms = keys.take_list("algorithms", config.algorithms);
    config.train_algorithm = keys.take_str("train.algorithm", config.train_algorithm);
    config.steps = keys.take_int("train.steps", config.steps);
    config.batch_size = keys.take_int("train.batch", config.batch_size);
    config.group_size = keys.take_int("train.group", config.group_size);
    config.schedule = keys.take_enum<ScheduleKind>(
        "train.schedule", config.schedule,
        {{"iid", ScheduleKind::iid_without_replacement},
         {"block_reuse", ScheduleKind::block_reuse}});
    config.reuse_length = keys.take_int("train.reuse", config.reuse_length);
    {
        const auto kind = keys.take_enum<LrSchedule::Kind>(
            "train.lr", LrSchedule::Kind::constant,
            {{"constant", LrSchedule::Kind::constant},
             {"inverse", LrSchedule::Kind::inverse}});
        const double value = keys.take_real("train.lr_value", 0.5);
        try {
            config.lr = kind == LrSchedule::Kind::constant ? LrSchedule::constant(value)
                                                           : LrSchedule::inverse(value);
        } catch (const Error& e) {
            throw Error(Errc::config_error,
                        keys.context("train.lr_value") + ": " + e.what());
        }
    }
    if (keys.has("train.retention")) {
        config.retention = keys.take_int("train.retention", 0);
    }
    {
        std::vector<std::string> fields = keys.take_list("train.snapshots", {});
        config.snapshot_steps.clear();
        for (const std::string& field : fields) {
            config.snapshot_steps.push_back(
                static_cast<int>(to_integer(field, keys.context("train.snapshots"))));
        }
    }

    {
        const std::string kernel = keys.take_str("baseline.kernel", "triangular");
        config.rho = keys.take_real("baseline.rho", config.rho);
        config.kernel_order = keys.take_int("baseline.order", config.kernel_order);
        try {
            config.kae_spec.kernel =
                kernel_from(kernel, config.rho, config.kernel_order, keys.context("baseline.kernel"));
        } catch (const Error& e) {
            throw Error(Errc::config_error, keys.context("baseline.kernel") + ": " + e.what());
        }
        const auto rule_kind = keys.take_enum<BandwidthRule::Kind>(
            "baseline.bandwidth", BandwidthRule::Kind::fixed_window,
            {{"fixed", BandwidthRule::Kind::fixed},
             {"stone", BandwidthRule::Kind::stone},
             {"fixed_window", BandwidthRule::Kind::fixed_window}});
        const double h = keys.take_real("baseline.h", 0.5);
        const double c = keys.take_real("baseline.c", 1.0);
        const int p = keys.take_int("baseline.p", 2);
        const int window = keys.take_int("baseline.window", 4);
        try {
            switch (rule_kind) {
                case BandwidthRule::Kind::fixed:
                    config.kae_spec.bandwidth = BandwidthRule::fixed(h);
                    break;
                case BandwidthRule::Kind::stone:
                    config.kae_spec.bandwidth = BandwidthRule::stone(c, p);
                    break;
                case BandwidthRule::Kind::fixed_window:
                    config.kae_spec.bandwidth = BandwidthRule::fixed_window(window);
                    break;
            }
        } catch (const Error& e) {
            throw Error(Errc::config_error, keys.context("baseline.bandwidth") + ": " + e.what());
        }
        config.kae_spec.std_normalize = keys.take_bool("baseline.std_normalize", false);
    }

    config.eval_step = keys.take_int("eval.step", config.eval_step);
    config.eval_group = keys.take_int("eval.group", config.eval_group);
    config.replications = keys.take_int("eval.replications", config.replications);
    config.sweep_kernels = keys.take_list("eval.kernels", config.sweep_kernels);
    {
        std::vector<std::string> fields = keys.take_list("eval.windows", {});
        config.sweep_windows.clear();
        for (const std::string& field : fields) {
            config.sweep_windows.push_back(
                static_cast<int>(to_integer(field, keys.context("eval.windows"))));
        }
    }

    keys.finish();
    return config;
}

ExperimentConfig parse_experiment(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw Error(Errc::config_error, "cannot read config file " + path.string());
    }
    std::ostringstream text;
    text << file.rdbuf();
    return parse_experiment_text(text.str(), path.string());
}

std::string render_config(const ExperimentConfig& config) {
    std::ostringstream out;
    auto kv = [&](const std::string& key, const std::string& value) {
        out << key << " = " << value << "\n";
    };
    auto join_ints = [](const std::vector<int>& values) {
        std::string text;
        for (int v : values) {
            if (!text.empty()) text += ",";
            text += std::to_string(v);
        }
        return text;
    };

    if (!config.preset.empty()) kv("preset", config.preset);
    kv("pipeline", pipeline_name(config.pipeline));
    kv("out.dir", config.out_dir.string());
    {
        std::string text;
        for (std::uint64_t seed : config.seeds) {
            if (!text.empty()) text += ",";
            text += std::to_string(seed);
        }
        kv("run.seeds", text);
    }
    kv("run.parallel", std::to_string(config.parallel));

    switch (config.task.kind) {
        case TaskKind::needle: kv("task.kind", "needle"); break;
        case TaskKind::parity: kv("task.kind", "parity"); break;
        case TaskKind::random_dense: kv("task.kind", "random_dense"); break;
    }
    kv("task.prompts", std::to_string(config.task.prompt_count));
    kv("task.vocab", std::to_string(config.task.vocab_size));
    kv("task.length", std::to_string(config.task.completion_length));
    kv("task.answers", std::to_string(config.task.answers_per_prompt));
    kv("task.density", format_double(config.task.density));
    kv("task.seed", std::to_string(config.task.seed));

    {
        std::string text;
        for (const std::string& name : config.algorithms) {
            if (!text.empty()) text += ",";
            text += name;
        }
        kv("algorithms", text);
    }
    kv("train.algorithm", config.train_algorithm);
    kv("train.steps", std::to_string(config.steps));
    kv("train.batch", std::to_string(config.batch_size));
    kv("train.group", std::to_string(config.group_size));
    kv("train.schedule",
       config.schedule == ScheduleKind::block_reuse ? "block_reuse" : "iid");
    kv("train.reuse", std::to_string(config.reuse_length));
    kv("train.lr", config.lr.kind == LrSchedule::Kind::constant ? "constant" : "inverse");
    kv("train.lr_value", format_double(config.lr.value));
    if (config.retention) kv("train.retention", std::to_string(*config.retention));
    if (!config.snapshot_steps.empty()) kv("train.snapshots", join_ints(config.snapshot_steps));

    kv("baseline.kernel", kernel_kind_name(config.kae_spec.kernel.kind()));
    kv("baseline.rho", format_double(config.rho));
    kv("baseline.order", std::to_string(config.kernel_order));
    kv("baseline.bandwidth", bandwidth_kind_name(config.kae_spec.bandwidth.kind));
    kv("baseline.h", format_double(config.kae_spec.bandwidth.h));
    kv("baseline.c", format_double(config.kae_spec.bandwidth.c));
    kv("baseline.p", std::to_string(config.kae_spec.bandwidth.p));
    kv("baseline.window", std::to_string(config.kae_spec.bandwidth.window));
    kv("baseline.std_normalize", config.kae_spec.std_normalize ? "true" : "false");

    kv("eval.step", std::to_string(config.eval_step));
    kv("eval.group", std::to_string(config.eval_group));
    kv("eval.replications", std::to_string(config.replications));
    if (!config.sweep_kernels.empty()) {
        std::string text;
        for (const std::string& name : config.sweep_kernels) {
            if (!text.empty()) text += ",";
            text += name;
        }
        kv("eval.kernels", text);
    }
    if (!config.sweep_windows.empty()) kv("eval.windows", join_ints(config.sweep_windows));
    return out.str();
}

void apply_env_overrides(ExperimentConfig& config) {
    if (const char* out = std::getenv("KAE_OUT"); out && *out) {
        config.out_dir = out;
    }
    if (const char* parallel = std::getenv("KAE_PARALLEL"); parallel && *parallel) {
        config.parallel =
            static_cast<int>(to_integer(parallel, "KAE_PARALLEL environment variable"));
    }
}

namespace {

void training_body(const ExperimentConfig& config, const TaskSet& task, RunArtifacts& artifacts) {
    struct Cell {
        AlgorithmPlan plan;
        std::uint64_t seed = 0;
    };
    std::vector<Cell> cells;
    for (const std::string& name : config.algorithms) {
        const AlgorithmPlan plan = resolve_algorithm(name, config);
        for (std::uint64_t seed : config.seeds) cells.push_back({plan, seed});
    }

    std::vector<RunRecord> runs(cells.size());
    run_parallel(cells.size(), config.parallel, [&](std::size_t i) {
        runs[i] = train(cells[i].plan.train_config(config, cells[i].seed), task);
    });

    std::vector<std::vector<std::string>> rows;
    std::vector<std::pair<std::string, const PolicyParams*>> checkpoints;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& cell = cells[i];
        const RunRecord& run = runs[i];
        for (const StepReport& report : run.reports) {
            rows.push_back({std::to_string(report.iteration), std::to_string(cell.seed),
                            cell.plan.name, format_double(report.mean_train_reward),
                            format_double(report.exact_objective),
                            format_double(report.grad_norm), format_double(report.lr)});
        }
        // terminal row: the post-update objective that the per-step rows
        // (which pair J with the policy that drew the step) never reach
        rows.push_back({std::to_string(config.steps), std::to_string(cell.seed), cell.plan.name,
                        "nan", format_double(exact_objective(run.final_policy(), task)), "nan",
                        "nan"});
        for (int at : config.snapshot_steps) {
            const std::string name = "policy_" + cell.plan.name + "_s" +
                                     std::to_string(cell.seed) + "_step" + std::to_string(at) +
                                     ".txt";
            run.policies[at].save(artifacts.dir / name, at);
            artifacts.files.push_back(name);
        }
    }
    write_csv(artifacts.dir / "train_curve.csv",
              {"step", "seed", "algorithm", "mean_train_reward", "exact_J", "grad_norm", "lr"},
              rows);
    artifacts.files.push_back("train_curve.csv");
}

void mse_body(const ExperimentConfig& config, const TaskSet& task, RunArtifacts& artifacts) {
    const AlgorithmPlan trainer_plan = resolve_algorithm(config.train_algorithm, config);
    const RunRecord run = train(trainer_plan.train_config(config, config.seeds.front()), task);
    const int at = config.eval_step < 0 ? config.steps : config.eval_step;
    const FrozenSnapshot snapshot = snapshot_at(run, task, at, -1);
    const int group = config.eval_group < 0 ? config.group_size : config.eval_group;

    if (config.pipeline == Pipeline::value_mse) {
        std::vector<std::vector<std::string>> rows;
        for (const std::string& name : config.algorithms) {
            const AlgorithmPlan plan = resolve_algorithm(name, config);
            for (const MseRow& row : value_mse(snapshot, plan.spec, group, config.replications,
                                               config.seeds.front(), plan.name)) {
                rows.push_back({std::to_string(row.step), row.algorithm, row.prompt,
                                format_double(row.mse), format_double(row.bias_sq),
                                format_double(row.variance), std::to_string(row.replications)});
            }
        }
        write_csv(artifacts.dir / "value_mse.csv",
                  {"step", "algorithm", "prompt", "mse", "bias_sq", "variance", "replications"},
                  rows);
        artifacts.files.push_back("value_mse.csv");
        return;
    }

    if (config.pipeline == Pipeline::grad_mse) {
        std::vector<std::vector<std::string>> rows;
        for (const std::string& name : config.algorithms) {
            const AlgorithmPlan plan = resolve_algorithm(name, config);
            const MseRow row = grad_mse(snapshot, plan.spec, group, config.replications,
                                        config.seeds.front(), plan.name);
            rows.push_back({std::to_string(row.step), row.algorithm, format_double(row.mse),
                            format_double(row.se), std::to_string(row.replications)});
        }
        write_csv(artifacts.dir / "grad_mse.csv",
                  {"step", "algorithm", "mse", "se", "replications"}, rows);
        artifacts.files.push_back("grad_mse.csv");
        return;
    }

    std::vector<KernelSpec> kernels;
    for (const std::string& name : config.sweep_kernels) {
        kernels.push_back(kernel_from(name, config.rho, config.kernel_order, "eval.kernels"));
    }
    std::vector<BandwidthRule> grid;
    for (int window : config.sweep_windows) grid.push_back(BandwidthRule::fixed_window(window));
    std::vector<std::vector<std::string>> rows;
    for (const SweepRow& row :
         sweep_bandwidth(snapshot, kernels, grid, group, config.replications,
                         config.seeds.front())) {
        rows.push_back({row.kernel, format_double(row.bandwidth), format_double(row.mse),
                        format_double(row.se)});
    }
    write_csv(artifacts.dir / "sweep.csv", {"kernel", "bandwidth", "mse", "se"}, rows);
    artifacts.files.push_back("sweep.csv");
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& config) {
    config.validate();
    const TaskSet task = make_task(config.task);

    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec) {
        throw Error(Errc::config_error,
                    "cannot create output directory " + config.out_dir.string() + ": " +
                        ec.message());
    }

    RunArtifacts artifacts{config.out_dir, {}};
    const std::string resolved = render_config(config);
    write_text(artifacts.dir / "resolved.cfg", resolved);
    artifacts.files.push_back("resolved.cfg");

    switch (config.pipeline) {
        case Pipeline::train:
        case Pipeline::oneshot:
        case Pipeline::ablation:
            training_body(config, task, artifacts);
            break;
        case Pipeline::value_mse:
        case Pipeline::grad_mse:
        case Pipeline::sweep:
            mse_body(config, task, artifacts);
            break;
    }

    nlohmann::json manifest;
    manifest["version"] = kArtifactVersion;
    manifest["pipeline"] = pipeline_name(config.pipeline);
    manifest["preset"] = config.preset;
    manifest["config"] = "resolved.cfg";
    manifest["config_hash"] = "fnv1a64:" + hex64(fnv1a64(resolved));
    manifest["seeds"] = config.seeds;
    manifest["outputs"] = artifacts.files;
    write_text(artifacts.dir / "manifest.json", manifest.dump(2) + "\n");
    artifacts.files.push_back("manifest.json");
    return artifacts;
}

CompareMetric compare_metric_from(const std::string& name) {
    if (name == "exact_J") return CompareMetric::exact_j;
    if (name == "value_mse") return CompareMetric::value_mse;
    if (name == "grad_mse") return CompareMetric::grad_mse;
    throw Error(Errc::config_error,
                "unknown metric \"" + name + "\" (expected exact_J | value_mse | grad_mse)");
}

CsvTable compare_runs(const std::vector<std::filesystem::path>& dirs, CompareMetric metric,
                      const std::string& reference) {
    if (dirs.empty()) {
        throw Error(Errc::mismatched_runs, "no runs to compare");
    }

    std::vector<ExperimentConfig> configs;
    for (const auto& dir : dirs) {
        configs.push_back(parse_experiment(dir / "resolved.cfg"));
    }
    for (std::size_t i = 1; i < configs.size(); ++i) {
        const TaskParams& a = configs[0].task;
        const TaskParams& b = configs[i].task;
        const bool same = a.kind == b.kind && a.prompt_count == b.prompt_count &&
                          a.vocab_size == b.vocab_size &&
                          a.completion_length == b.completion_length &&
                          a.answers_per_prompt == b.answers_per_prompt &&
                          a.density == b.density && a.seed == b.seed;
        if (!same) {
            throw Error(Errc::mismatched_runs, dirs[0].string() + " and " + dirs[i].string() +
                                                   " ran different tasks");
        }
    }

    // (algorithm, step) -> per-run/seed metric values, insertion-ordered
    std::vector<std::pair<std::string, long>> order;
    std::map<std::pair<std::string, long>, std::vector<double>> samples;
    auto add = [&](const std::string& algorithm, long step, double value) {
        const auto key = std::make_pair(algorithm, step);
        if (!samples.count(key)) order.push_back(key);
        samples[key].push_back(value);
    };

    for (const auto& dir : dirs) {
        if (metric == CompareMetric::exact_j) {
            const CsvTable table = read_csv(dir / "train_curve.csv");
            const int c_step = table.column("step");
            const int c_seed = table.column("seed");
            const int c_alg = table.column("algorithm");
            const int c_j = table.column("exact_J");
            // final exact_J per (algorithm, seed): the row with the largest step
            std::map<std::pair<std::string, std::string>, std::pair<long, double>> latest;
            for (const auto& row : table.rows) {
                const long step = to_integer(row[c_step], dir.string() + ":train_curve.csv");
                const auto key = std::make_pair(row[c_alg], row[c_seed]);
                const double j = parse_double(row[c_j], "exact_J");
                if (!latest.count(key) || step > latest[key].first) {
                    latest[key] = {step, j};
                }
            }
            for (const auto& [key, value] : latest) {
                add(key.first, value.first, value.second);
            }
        } else if (metric == CompareMetric::value_mse) {
            const CsvTable table = read_csv(dir / "value_mse.csv");
            const int c_step = table.column("step");
            const int c_alg = table.column("algorithm");
            const int c_prompt = table.column("prompt");
            const int c_mse = table.column("mse");
            for (const auto& row : table.rows) {
                if (row[c_prompt] != "all") continue;
                add(row[c_alg], to_integer(row[c_step], "value_mse.csv"),
                    parse_double(row[c_mse], "mse"));
            }
        } else {
            const CsvTable table = read_csv(dir / "grad_mse.csv");
            const int c_step = table.column("step");
            const int c_alg = table.column("algorithm");
            const int c_mse = table.column("mse");
            for (const auto& row : table.rows) {
                add(row[c_alg], to_integer(row[c_step], "grad_mse.csv"),
                    parse_double(row[c_mse], "mse"));
            }
        }
    }

    // reference mean per step
    std::map<long, double> reference_mean;
    for (const auto& key : order) {
        if (key.first != reference) continue;
        const auto& values = samples[key];
        double mean = 0.0;
        for (double v : values) mean += v;
        reference_mean[key.second] = mean / values.size();
    }
    if (reference_mean.empty()) {
        throw Error(Errc::config_error,
                    "reference algorithm \"" + reference + "\" not present in these runs");
    }

    CsvTable result;
    result.header = {"algorithm", "step", "mean", "se", "runs", "reduction_pct"};
    for (const auto& key : order) {
        const auto& values = samples[key];
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= values.size();
        double se = 0.0;
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - mean) * (v - mean);
            se = std::sqrt(ss / (values.size() - 1) / values.size());
        }
        const auto ref = reference_mean.find(key.second);
        if (ref == reference_mean.end()) {
            throw Error(Errc::mismatched_runs,
                        "no reference value at step " + std::to_string(key.second));
        }
        const double reduction =
            ref->second == 0.0 ? (mean == 0.0 ? 0.0 : std::nan(""))
                               : 100.0 * (ref->second - mean) / ref->second;
        result.rows.push_back({key.first, std::to_string(key.second), format_double(mean),
                               format_double(se), std::to_string(values.size()),
                               format_double(reduction)});
    }
    return result;
}

}  // namespace kae
