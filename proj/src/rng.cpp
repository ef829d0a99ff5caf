#include "kae/rng.hpp"

#include "kae/common.hpp"

namespace kae {

std::uint64_t splitmix64(std::uint64_t state) {
    std::uint64_t z = state + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 0xCBF29CE484222325ull;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001B3ull;
    }
    return hash;
}

RngStream RngStream::derive(std::uint64_t master, std::string_view name, std::uint64_t index) {
    std::uint64_t seed = splitmix64(splitmix64(master ^ fnv1a64(name)) + index);
    return RngStream(seed);
}

int RngStream::uniform_int(int bound) {
    if (bound <= 0) {
        throw Error(Errc::malformed_input, "uniform_int bound must be positive");
    }
    const std::uint64_t b = static_cast<std::uint64_t>(bound);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % b;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return static_cast<int>(r % b);
}

std::vector<int> RngStream::sample_without_replacement(int population, int count) {
    if (count < 0 || count > population) {
        throw Error(Errc::malformed_input, "sample count must be in [0, population]");
    }
    // Partial Fisher-Yates over an index array; only the first `count`
    // slots are consumed.
    std::vector<int> idx(population);
    for (int i = 0; i < population; ++i) idx[i] = i;
    std::vector<int> out(count);
    for (int i = 0; i < count; ++i) {
        int j = i + uniform_int(population - i);
        std::swap(idx[i], idx[j]);
        out[i] = idx[i];
    }
    return out;
}

}  // namespace kae
