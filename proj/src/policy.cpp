#include "kae/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace kae {

PolicyParams::PolicyParams(int prompt_count, int completion_length, int vocab_size)
    : prompt_count_(prompt_count),
      completion_length_(completion_length),
      vocab_size_(vocab_size) {
    if (prompt_count < 1 || completion_length < 1 || vocab_size < 2) {
        throw Error(Errc::malformed_input, "policy needs m >= 1, L >= 1, V >= 2");
    }
    logits_.assign(static_cast<std::size_t>(prompt_count) * completion_length * vocab_size, 0.0);
}

void PolicyParams::check_prompt(PromptId prompt) const {
    if (prompt < 0 || prompt >= prompt_count_) {
        throw Error(Errc::malformed_input, "prompt id out of range");
    }
}

void PolicyParams::check_completion(const Completion& completion) const {
    if (static_cast<int>(completion.tokens.size()) != completion_length_) {
        throw Error(Errc::malformed_input, "completion length mismatch");
    }
    for (int token : completion.tokens) {
        if (token < 0 || token >= vocab_size_) {
            throw Error(Errc::malformed_input, "token out of range");
        }
    }
}

std::vector<double> PolicyParams::position_probs(PromptId prompt, int position) const {
    check_prompt(prompt);
    if (position < 0 || position >= completion_length_) {
        throw Error(Errc::malformed_input, "position out of range");
    }
    const double* row = logits_.data() + offset(prompt, position, 0);
    double max_logit = row[0];
    for (int v = 1; v < vocab_size_; ++v) max_logit = std::max(max_logit, row[v]);
    std::vector<double> probs(vocab_size_);
    double total = 0.0;
    for (int v = 0; v < vocab_size_; ++v) {
        probs[v] = std::exp(row[v] - max_logit);
        total += probs[v];
    }
    for (double& p : probs) p /= total;
    return probs;
}

double PolicyParams::log_prob(PromptId prompt, const Completion& completion) const {
    check_prompt(prompt);
    check_completion(completion);
    double total = 0.0;
    for (int t = 0; t < completion_length_; ++t) {
        const double* row = logits_.data() + offset(prompt, t, 0);
        double max_logit = row[0];
        for (int v = 1; v < vocab_size_; ++v) max_logit = std::max(max_logit, row[v]);
        double denom = 0.0;
        for (int v = 0; v < vocab_size_; ++v) denom += std::exp(row[v] - max_logit);
        total += row[completion.tokens[t]] - max_logit - std::log(denom);
    }
    return total;
}

double PolicyParams::prob(PromptId prompt, const Completion& completion) const {
    return std::exp(log_prob(prompt, completion));
}

Completion PolicyParams::sample_one(PromptId prompt, RngStream& rng) const {
    check_prompt(prompt);
    Completion out;
    out.tokens.reserve(completion_length_);
    for (int t = 0; t < completion_length_; ++t) {
        const std::vector<double> probs = position_probs(prompt, t);
        const double u = rng.uniform();
        double cumulative = 0.0;
        int chosen = vocab_size_ - 1;  // rounding guard: u can exceed the final cumsum
        for (int v = 0; v < vocab_size_; ++v) {
            cumulative += probs[v];
            if (u < cumulative) {
                chosen = v;
                break;
            }
        }
        out.tokens.push_back(chosen);
    }
    return out;
}

std::vector<Completion> PolicyParams::sample(PromptId prompt, int group_size,
                                             RngStream& rng) const {
    if (group_size < 1) {
        throw Error(Errc::degenerate_group, "group size must be >= 1");
    }
    std::vector<Completion> out;
    out.reserve(group_size);
    for (int g = 0; g < group_size; ++g) out.push_back(sample_one(prompt, rng));
    return out;
}

std::vector<double> PolicyParams::score(PromptId prompt, const Completion& completion) const {
    check_prompt(prompt);
    check_completion(completion);
    std::vector<double> block(static_cast<std::size_t>(completion_length_) * vocab_size_);
    for (int t = 0; t < completion_length_; ++t) {
        const std::vector<double> probs = position_probs(prompt, t);
        for (int v = 0; v < vocab_size_; ++v) {
            block[static_cast<std::size_t>(t) * vocab_size_ + v] =
                (completion.tokens[t] == v ? 1.0 : 0.0) - probs[v];
        }
    }
    return block;
}

void PolicyParams::accumulate_score(PromptId prompt, const Completion& completion, double coeff,
                                    std::vector<double>& grad) const {
    check_prompt(prompt);
    check_completion(completion);
    if (grad.size() != logits_.size()) {
        throw Error(Errc::malformed_input, "gradient buffer has wrong dimension");
    }
    for (int t = 0; t < completion_length_; ++t) {
        const std::vector<double> probs = position_probs(prompt, t);
        double* out = grad.data() + offset(prompt, t, 0);
        for (int v = 0; v < vocab_size_; ++v) {
            out[v] += coeff * ((completion.tokens[t] == v ? 1.0 : 0.0) - probs[v]);
        }
    }
}

void PolicyParams::apply_step(const std::vector<double>& direction, double step_size) {
    if (direction.size() != logits_.size()) {
        throw Error(Errc::malformed_input, "step direction has wrong dimension");
    }
    for (std::size_t i = 0; i < logits_.size(); ++i) logits_[i] += step_size * direction[i];
}

void PolicyParams::save(const std::filesystem::path& path, long step) const {
    std::ofstream out(path);
    if (!out) {
        throw Error(Errc::malformed_input, "cannot open " + path.string() + " for writing");
    }
    out << prompt_count_ << ' ' << vocab_size_ << ' ' << completion_length_ << ' ' << step << '\n';
    char buffer[64];
    for (double value : logits_) {
        std::snprintf(buffer, sizeof(buffer), "%.17g", value);
        out << buffer << '\n';
    }
}

PolicyParams PolicyParams::load(const std::filesystem::path& path, long* step) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::malformed_input, "cannot open checkpoint " + path.string());
    }
    int m = 0, v = 0, l = 0;
    long stored_step = 0;
    if (!(in >> m >> v >> l >> stored_step)) {
        throw Error(Errc::malformed_input, "checkpoint header must be: m V L step");
    }
    PolicyParams policy(m, l, v);
    for (double& value : policy.logits_) {
        if (!(in >> value)) {
            throw Error(Errc::malformed_input, "checkpoint truncated: expected " +
                                                   std::to_string(policy.logits_.size()) +
                                                   " logits");
        }
        if (!std::isfinite(value)) {
            throw Error(Errc::numerical_failure, "checkpoint contains non-finite logit");
        }
    }
    if (step != nullptr) *step = stored_step;
    return policy;
}

}  // namespace kae
