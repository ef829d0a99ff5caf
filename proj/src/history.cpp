#include "kae/history.hpp"

#include <algorithm>
#include <string>

namespace kae {

HistoryStore::HistoryStore(int retention_window) {
    if (retention_window < 1) {
        throw Error(Errc::malformed_input, "retention window must be positive");
    }
    retention_ = retention_window;
}

void HistoryStore::record(PromptId prompt, int iteration, std::vector<double> rewards) {
    if (prompt < 0) {
        throw Error(Errc::malformed_input, "negative prompt id");
    }
    if (rewards.empty()) {
        throw Error(Errc::malformed_input, "reward record must be nonempty");
    }
    if (prompt >= static_cast<int>(per_prompt_.size())) {
        per_prompt_.resize(static_cast<std::size_t>(prompt) + 1);
    }
    auto& recs = per_prompt_[prompt];
    if (!recs.empty() && iteration <= recs.back().iteration) {
        throw Error(Errc::history_corruption,
                    "record for prompt " + std::to_string(prompt) + " at iteration " +
                        std::to_string(iteration) + " not after " +
                        std::to_string(recs.back().iteration));
    }
    recs.push_back(RewardRecord{iteration, std::move(rewards)});
    if (retention_) {
        const int cutoff = iteration - *retention_;
        recs.erase(std::remove_if(recs.begin(), recs.end(),
                                  [&](const RewardRecord& r) { return r.iteration < cutoff; }),
                   recs.end());
    }
}

const std::vector<RewardRecord>& HistoryStore::records(PromptId prompt) const {
    static const std::vector<RewardRecord> empty;
    if (prompt < 0 || prompt >= static_cast<int>(per_prompt_.size())) return empty;
    return per_prompt_[prompt];
}

std::vector<PastReward> HistoryStore::past_records(PromptId prompt, int current_iter,
                                                   int max_lag) const {
    std::vector<PastReward> out;
    for (const auto& rec : records(prompt)) {
        const int lag = current_iter - rec.iteration;
        if (lag < 1 || lag > max_lag) continue;
        for (double z : rec.rewards) out.push_back(PastReward{rec.iteration, z});
    }
    return out;
}

int HistoryStore::record_count(PromptId prompt) const {
    return static_cast<int>(records(prompt).size());
}

int HistoryStore::reward_count(PromptId prompt) const {
    int n = 0;
    for (const auto& rec : records(prompt)) n += static_cast<int>(rec.rewards.size());
    return n;
}

int HistoryStore::effective_sample_size(PromptId prompt, int group_size) const {
    if (group_size < 1) {
        throw Error(Errc::malformed_input, "group size must be >= 1");
    }
    return group_size * record_count(prompt) + (group_size - 1);
}

int HistoryStore::last_iteration(PromptId prompt) const {
    const auto& recs = records(prompt);
    return recs.empty() ? -1 : recs.back().iteration;
}

SamplingSchedule SamplingSchedule::iid(int prompt_count, int batch_size) {
    SamplingSchedule s;
    s.kind = ScheduleKind::iid_without_replacement;
    s.prompt_count = prompt_count;
    s.batch_size = batch_size;
    s.validate();
    return s;
}

SamplingSchedule SamplingSchedule::block(int prompt_count, int batch_size, int reuse_length) {
    SamplingSchedule s;
    s.kind = ScheduleKind::block_reuse;
    s.prompt_count = prompt_count;
    s.batch_size = batch_size;
    s.reuse_length = reuse_length;
    s.validate();
    return s;
}

void SamplingSchedule::validate() const {
    if (prompt_count < 1 || batch_size < 1 || batch_size > prompt_count) {
        throw Error(Errc::malformed_input, "schedule needs 1 <= B <= m");
    }
    if (kind == ScheduleKind::block_reuse && reuse_length < 1) {
        throw Error(Errc::malformed_input, "block_reuse needs J >= 1");
    }
}

MinibatchSampler::MinibatchSampler(SamplingSchedule schedule, RngStream& rng)
    : schedule_(schedule) {
    schedule_.validate();
    if (schedule_.kind == ScheduleKind::block_reuse) {
        permutation_.resize(schedule_.prompt_count);
        for (int i = 0; i < schedule_.prompt_count; ++i) permutation_[i] = i;
        rng.shuffle(permutation_);
        block_count_ = (schedule_.prompt_count + schedule_.batch_size - 1) / schedule_.batch_size;
        uses_left_ = schedule_.reuse_length;
    }
}

std::vector<PromptId> MinibatchSampler::next(RngStream& rng) {
    if (schedule_.kind == ScheduleKind::iid_without_replacement) {
        return rng.sample_without_replacement(schedule_.prompt_count, schedule_.batch_size);
    }
    const int begin = block_index_ * schedule_.batch_size;
    const int end = std::min(begin + schedule_.batch_size, schedule_.prompt_count);
    std::vector<PromptId> batch(permutation_.begin() + begin, permutation_.begin() + end);
    if (--uses_left_ == 0) {
        uses_left_ = schedule_.reuse_length;
        block_index_ = (block_index_ + 1) % block_count_;
    }
    return batch;
}

}  // namespace kae
