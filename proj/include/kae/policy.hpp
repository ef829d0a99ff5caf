#pragma once

#include <filesystem>
#include <vector>

#include "kae/common.hpp"
#include "kae/env.hpp"
#include "kae/rng.hpp"

namespace kae {

// Tabular factored autoregressive softmax policy. One logit row per
// (prompt, position); pi(y|x) = prod_t softmax(logits[x][t])[y_t].
// Parameter dimension is m*L*V. Zero logits give the uniform policy.
class PolicyParams {
  public:
    enum class Parameterization { tabular_factored };

    PolicyParams(int prompt_count, int completion_length, int vocab_size);

    int prompt_count() const { return prompt_count_; }
    int completion_length() const { return completion_length_; }
    int vocab_size() const { return vocab_size_; }
    int dimension() const { return static_cast<int>(logits_.size()); }
    Parameterization parameterization() const { return Parameterization::tabular_factored; }

    double logit(PromptId prompt, int position, int token) const {
        return logits_[offset(prompt, position, token)];
    }
    void set_logit(PromptId prompt, int position, int token, double value) {
        logits_[offset(prompt, position, token)] = value;
    }

    // Flat [m*L*V] view in (prompt, position, token) row-major order; the
    // trainer's gradient vectors use the same layout.
    const std::vector<double>& flat() const { return logits_; }
    std::vector<double>& flat() { return logits_; }

    // softmax(logits[prompt][position]); entries sum to 1.
    std::vector<double> position_probs(PromptId prompt, int position) const;

    double log_prob(PromptId prompt, const Completion& completion) const;
    double prob(PromptId prompt, const Completion& completion) const;

    // G i.i.d. completions; each position's token drawn from its softmax
    // row by inverse CDF, positions independent.
    std::vector<Completion> sample(PromptId prompt, int group_size, RngStream& rng) const;
    Completion sample_one(PromptId prompt, RngStream& rng) const;

    // Gradient of log pi(y|x) restricted to prompt x's [L*V] block:
    // score[t][v] = 1{y_t = v} - softmax(logits[x][t])[v]. Entries for other
    // prompts are identically zero, so the block is the whole gradient.
    std::vector<double> score(PromptId prompt, const Completion& completion) const;

    // grad[prompt block] += coeff * score(prompt, completion); grad has the
    // full flat() layout. Avoids materializing dense per-sample scores.
    void accumulate_score(PromptId prompt, const Completion& completion, double coeff,
                          std::vector<double>& grad) const;

    // logits += step_size * direction (full flat layout).
    void apply_step(const std::vector<double>& direction, double step_size);

    // Text checkpoint: header "m V L step", then m*L*V logits one per line.
    void save(const std::filesystem::path& path, long step) const;
    static PolicyParams load(const std::filesystem::path& path, long* step = nullptr);

  private:
    std::size_t offset(PromptId prompt, int position, int token) const {
        return (static_cast<std::size_t>(prompt) * completion_length_ + position) * vocab_size_ +
               token;
    }
    void check_prompt(PromptId prompt) const;
    void check_completion(const Completion& completion) const;

    int prompt_count_;
    int completion_length_;
    int vocab_size_;
    std::vector<double> logits_;
};

}  // namespace kae
