#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace kae {

// Deterministic random stream. A single master seed derives independent
// named streams; every distribution below is implemented on top of the
// raw 64-bit output so sequences are identical across platforms and
// standard libraries.
//
// Stream derivation: the stream seed is
//   splitmix64(splitmix64(master ^ fnv1a64(name)) + index)
// which decorrelates streams for distinct (name, index) pairs.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    static RngStream derive(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound), bound >= 1. Unbiased via rejection.
    int uniform_int(int bound);

    // Fisher-Yates; spelled out so the permutation sequence is pinned.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (int i = static_cast<int>(values.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(values[i], values[j]);
        }
    }

    // B distinct values from {0, ..., m-1}, order randomized.
    std::vector<int> sample_without_replacement(int population, int count);

  private:
    std::mt19937_64 gen_;
};

std::uint64_t splitmix64(std::uint64_t state);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace kae
