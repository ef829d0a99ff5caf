#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kae/common.hpp"
#include "kae/rng.hpp"

namespace kae {

// Fixed-length token sequence over vocabulary {0, ..., V-1}.
struct Completion {
    std::vector<int> tokens;
};

inline constexpr int kDefaultEnumerationCap = 4096;

// m prompts, each with a nonempty set of accepted completions. Rewards
// are the binary membership indicator, so boundedness holds by
// construction. Immutable after construction.
class TaskSet {
  public:
    TaskSet(int prompt_count, int vocab_size, int completion_length,
            std::vector<std::vector<Completion>> answers,
            std::vector<double> prompt_weights = {});

    int prompt_count() const { return prompt_count_; }
    int vocab_size() const { return vocab_size_; }
    int completion_length() const { return completion_length_; }
    int completion_space() const { return completion_space_; }  // V^L
    const std::vector<double>& prompt_weights() const { return prompt_weights_; }

    // 1 if the completion is accepted for the prompt, else 0.
    double reward(PromptId prompt, const Completion& completion) const;

    // Accepted completions of a prompt, lexicographic order.
    std::vector<Completion> answers(PromptId prompt) const;
    const std::vector<int>& answer_ids(PromptId prompt) const;

    // Lexicographic index of a completion; the inverse of decode().
    int encode(const Completion& completion) const;
    Completion decode(int index) const;

    void save(const std::filesystem::path& path) const;
    static TaskSet load(const std::filesystem::path& path);

  private:
    int prompt_count_;
    int vocab_size_;
    int completion_length_;
    int completion_space_;
    std::vector<std::vector<int>> answer_ids_;  // sorted per prompt
    std::vector<double> prompt_weights_;
};

// All V^L completions in lexicographic order. Signals
// enumeration-infeasible past the cap.
std::vector<Completion> enumerate_completions(int vocab_size, int completion_length,
                                              int cap = kDefaultEnumerationCap);

enum class TaskKind { needle, parity, random_dense };

struct TaskParams {
    TaskKind kind = TaskKind::needle;
    int prompt_count = 16;
    int vocab_size = 4;
    int completion_length = 3;
    int answers_per_prompt = 4;  // needle
    double density = 0.1;        // random_dense
    std::uint64_t seed = 0;
    int enumeration_cap = kDefaultEnumerationCap;
};

// Task generators:
//   needle       k fixed accepted completions per prompt, seeded draw
//   parity       accepted iff token sum mod 2 equals a per-prompt bit
//   random_dense each completion accepted with probability `density`,
//                redrawn while a prompt's set comes out empty
TaskSet make_task(const TaskParams& params);

// The task every acceptance-style comparison runs on: needle, m=16,
// V=4, L=3, k=4. Uniform-policy value 4/64 per prompt.
TaskSet reference_task(std::uint64_t seed = 20240901);

}  // namespace kae
