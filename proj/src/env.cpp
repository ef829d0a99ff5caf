#include "kae/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kae {

namespace {

int checked_space(int vocab_size, int completion_length, int cap) {
    if (vocab_size < 2 || completion_length < 1) {
        throw Error(Errc::malformed_input, "task needs V >= 2 and L >= 1");
    }
    long long space = 1;
    for (int t = 0; t < completion_length; ++t) {
        space *= vocab_size;
        if (space > cap) {
            throw Error(Errc::enumeration_infeasible,
                        "V^L = " + std::to_string(space) + "+ exceeds enumeration cap " +
                            std::to_string(cap));
        }
    }
    return static_cast<int>(space);
}

}  // namespace

TaskSet::TaskSet(int prompt_count, int vocab_size, int completion_length,
                 std::vector<std::vector<Completion>> answers, std::vector<double> prompt_weights)
    : prompt_count_(prompt_count),
      vocab_size_(vocab_size),
      completion_length_(completion_length),
      completion_space_(checked_space(vocab_size, completion_length, kDefaultEnumerationCap)) {
    if (prompt_count < 1 || static_cast<int>(answers.size()) != prompt_count) {
        throw Error(Errc::malformed_input, "answer sets must match prompt count");
    }
    answer_ids_.resize(prompt_count);
    for (int x = 0; x < prompt_count; ++x) {
        if (answers[x].empty()) {
            throw Error(Errc::malformed_input,
                        "prompt " + std::to_string(x) + " has an empty answer set");
        }
        for (const auto& completion : answers[x]) {
            answer_ids_[x].push_back(encode(completion));
        }
        std::sort(answer_ids_[x].begin(), answer_ids_[x].end());
        answer_ids_[x].erase(std::unique(answer_ids_[x].begin(), answer_ids_[x].end()),
                             answer_ids_[x].end());
    }
    if (prompt_weights.empty()) {
        prompt_weights_.assign(prompt_count, 1.0 / prompt_count);
    } else {
        if (static_cast<int>(prompt_weights.size()) != prompt_count) {
            throw Error(Errc::malformed_input, "prompt weights must match prompt count");
        }
        double sum = 0.0;
        for (double w : prompt_weights) sum += w;
        if (std::fabs(sum - 1.0) > 1e-12) {
            throw Error(Errc::malformed_input, "prompt weights must sum to 1");
        }
        prompt_weights_ = std::move(prompt_weights);
    }
}

int TaskSet::encode(const Completion& completion) const {
    if (static_cast<int>(completion.tokens.size()) != completion_length_) {
        throw Error(Errc::malformed_input, "completion length mismatch");
    }
    int index = 0;
    for (int token : completion.tokens) {
        if (token < 0 || token >= vocab_size_) {
            throw Error(Errc::malformed_input, "token out of range");
        }
        index = index * vocab_size_ + token;
    }
    return index;
}

Completion TaskSet::decode(int index) const {
    if (index < 0 || index >= completion_space_) {
        throw Error(Errc::malformed_input, "completion index out of range");
    }
    Completion c;
    c.tokens.assign(completion_length_, 0);
    for (int t = completion_length_ - 1; t >= 0; --t) {
        c.tokens[t] = index % vocab_size_;
        index /= vocab_size_;
    }
    return c;
}

double TaskSet::reward(PromptId prompt, const Completion& completion) const {
    if (prompt < 0 || prompt >= prompt_count_) {
        throw Error(Errc::malformed_input, "prompt id out of range");
    }
    const int id = encode(completion);
    const auto& ids = answer_ids_[prompt];
    return std::binary_search(ids.begin(), ids.end(), id) ? 1.0 : 0.0;
}

std::vector<Completion> TaskSet::answers(PromptId prompt) const {
    if (prompt < 0 || prompt >= prompt_count_) {
        throw Error(Errc::malformed_input, "prompt id out of range");
    }
    std::vector<Completion> out;
    for (int id : answer_ids_[prompt]) out.push_back(decode(id));
    return out;
}

const std::vector<int>& TaskSet::answer_ids(PromptId prompt) const {
    if (prompt < 0 || prompt >= prompt_count_) {
        throw Error(Errc::malformed_input, "prompt id out of range");
    }
    return answer_ids_[prompt];
}

std::vector<Completion> enumerate_completions(int vocab_size, int completion_length, int cap) {
    const int space = checked_space(vocab_size, completion_length, cap);
    std::vector<Completion> out;
    out.reserve(space);
    Completion current;
    current.tokens.assign(completion_length, 0);
    for (int i = 0; i < space; ++i) {
        out.push_back(current);
        for (int t = completion_length - 1; t >= 0; --t) {
            if (++current.tokens[t] < vocab_size) break;
            current.tokens[t] = 0;
        }
    }
    return out;
}

TaskSet make_task(const TaskParams& params) {
    const int space = checked_space(params.vocab_size, params.completion_length,
                                    params.enumeration_cap);
    if (params.prompt_count < 1) {
        throw Error(Errc::malformed_input, "task needs at least one prompt");
    }
    RngStream rng = RngStream::derive(params.seed, "task");
    std::vector<std::vector<Completion>> answers(params.prompt_count);

    auto decode = [&](int index) {
        Completion c;
        c.tokens.assign(params.completion_length, 0);
        for (int t = params.completion_length - 1; t >= 0; --t) {
            c.tokens[t] = index % params.vocab_size;
            index /= params.vocab_size;
        }
        return c;
    };

    switch (params.kind) {
        case TaskKind::needle: {
            if (params.answers_per_prompt < 1 || params.answers_per_prompt > space) {
                throw Error(Errc::malformed_input, "needle k out of range");
            }
            for (int x = 0; x < params.prompt_count; ++x) {
                auto ids = rng.sample_without_replacement(space, params.answers_per_prompt);
                for (int id : ids) answers[x].push_back(decode(id));
            }
            break;
        }
        case TaskKind::parity: {
            for (int x = 0; x < params.prompt_count; ++x) {
                const int target = rng.uniform_int(2);
                for (int id = 0; id < space; ++id) {
                    Completion c = decode(id);
                    int sum = 0;
                    for (int token : c.tokens) sum += token;
                    if (sum % 2 == target) answers[x].push_back(std::move(c));
                }
            }
            break;
        }
        case TaskKind::random_dense: {
            if (!(params.density > 0.0 && params.density <= 1.0)) {
                throw Error(Errc::malformed_input, "random task density must be in (0,1]");
            }
            for (int x = 0; x < params.prompt_count; ++x) {
                while (answers[x].empty()) {
                    for (int id = 0; id < space; ++id) {
                        if (rng.uniform() < params.density) answers[x].push_back(decode(id));
                    }
                }
            }
            break;
        }
    }
    return TaskSet(params.prompt_count, params.vocab_size, params.completion_length,
                   std::move(answers));
}

TaskSet reference_task(std::uint64_t seed) {
    TaskParams p;
    p.kind = TaskKind::needle;
    p.prompt_count = 16;
    p.vocab_size = 4;
    p.completion_length = 3;
    p.answers_per_prompt = 4;
    p.seed = seed;
    return make_task(p);
}

void TaskSet::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw Error(Errc::malformed_input, "cannot open " + path.string() + " for writing");
    }
    out << prompt_count_ << ' ' << vocab_size_ << ' ' << completion_length_ << '\n';
    for (int x = 0; x < prompt_count_; ++x) {
        out << answer_ids_[x].size() << '\n';
        for (int id : answer_ids_[x]) {
            Completion c = decode(id);
            for (int t = 0; t < completion_length_; ++t) {
                out << c.tokens[t] << (t + 1 == completion_length_ ? '\n' : ' ');
            }
        }
    }
}

TaskSet TaskSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::malformed_input, "cannot open task file " + path.string());
    }
    int m = 0, v = 0, l = 0;
    if (!(in >> m >> v >> l)) {
        throw Error(Errc::malformed_input, "task file header must be: m V L");
    }
    std::vector<std::vector<Completion>> answers(std::max(m, 0));
    for (int x = 0; x < m; ++x) {
        std::size_t count = 0;
        if (!(in >> count)) {
            throw Error(Errc::malformed_input, "task file truncated at prompt " + std::to_string(x));
        }
        for (std::size_t i = 0; i < count; ++i) {
            Completion c;
            c.tokens.assign(l, 0);
            for (int t = 0; t < l; ++t) {
                if (!(in >> c.tokens[t])) {
                    throw Error(Errc::malformed_input,
                                "task file truncated in prompt " + std::to_string(x));
                }
            }
            answers[x].push_back(std::move(c));
        }
    }
    return TaskSet(m, v, l, std::move(answers));
}

}  // namespace kae
