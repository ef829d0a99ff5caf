#pragma once

#include <optional>
#include <vector>

#include "kae/common.hpp"
#include "kae/rng.hpp"

namespace kae {

// One visit of a prompt: the training step index and the G rewards
// recorded there.
struct RewardRecord {
    int iteration = 0;
    std::vector<double> rewards;
};

struct PastReward {
    int iteration = 0;
    double reward = 0.0;
};

// Per-prompt chronological reward history. Mutated only by the trainer
// loop; copies serve as read-only snapshots for evaluation.
class HistoryStore {
  public:
    HistoryStore() = default;
    explicit HistoryStore(int retention_window);

    // Appends a record; iterations per prompt must be strictly
    // increasing. Records whose age exceeds the retention window are
    // evicted on the way out.
    void record(PromptId prompt, int iteration, std::vector<double> rewards);

    // Flattened (iteration, reward) pairs with 1 <= current_iter - iteration
    // <= max_lag, chronological order. Unknown prompts yield empty.
    std::vector<PastReward> past_records(PromptId prompt, int current_iter, int max_lag) const;

    const std::vector<RewardRecord>& records(PromptId prompt) const;

    // Number of past visits of the prompt.
    int record_count(PromptId prompt) const;

    // Total stored rewards for the prompt (|H| in the alg1 normalizer).
    int reward_count(PromptId prompt) const;

    // G * (past visits) + (G - 1): the sample size backing a
    // leave-one-out estimate at this prompt.
    int effective_sample_size(PromptId prompt, int group_size) const;

    int last_iteration(PromptId prompt) const;  // -1 when empty
    int prompt_count() const { return static_cast<int>(per_prompt_.size()); }
    std::optional<int> retention_window() const { return retention_; }

  private:
    std::vector<std::vector<RewardRecord>> per_prompt_;
    std::optional<int> retention_;
};

enum class ScheduleKind { iid_without_replacement, block_reuse };

struct SamplingSchedule {
    ScheduleKind kind = ScheduleKind::block_reuse;
    int batch_size = 1;
    int prompt_count = 1;
    int reuse_length = 1;  // J, block_reuse only

    static SamplingSchedule iid(int prompt_count, int batch_size);
    static SamplingSchedule block(int prompt_count, int batch_size, int reuse_length);
    void validate() const;
};

// Draws minibatches under the configured schedule.
//
// iid: a fresh uniform draw of B distinct prompts per call.
// block_reuse: prompts are partitioned once into ceil(m/B) blocks by a
// seeded shuffle at construction; each block is returned for J
// consecutive calls before advancing, cycling over blocks.
class MinibatchSampler {
  public:
    MinibatchSampler(SamplingSchedule schedule, RngStream& rng);

    std::vector<PromptId> next(RngStream& rng);

    const SamplingSchedule& schedule() const { return schedule_; }

  private:
    SamplingSchedule schedule_;
    std::vector<PromptId> permutation_;  // block_reuse partition
    int block_count_ = 0;
    int block_index_ = 0;
    int uses_left_ = 0;
};

}  // namespace kae
