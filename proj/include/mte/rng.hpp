#pragma once

#include <cstdint>
#include <random>

namespace mte {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of an independent stream identified by (root, a, b, c); counter-based, order independent.
inline std::uint64_t stream_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    return mix64(mix64(mix64(mix64(root) ^ a) ^ b) ^ c);
}

inline Rng make_rng(std::uint64_t root, std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0) {
    return Rng(stream_seed(root, a, b, c));
}

/// Stream tags so that different consumers of one root seed never share draws.
enum StreamTag : std::uint64_t {
    kStreamData = 1,
    kStreamXi = 2,
    kStreamEta = 3,
    kStreamStarts = 4,
    kStreamMixture = 5,
};

}  // namespace mte
