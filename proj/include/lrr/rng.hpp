#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lrr {

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives a named sub-seed ("split", "init", "shuffle", ...) from a global seed,
/// so independent consumers of randomness never share a stream.
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(mix64(seed ^ h) + index);
}

using Rng = std::mt19937_64;

/// Uniform real in [lo, hi]; returns lo exactly when the range is a point.
inline double uniform(Rng& rng, double lo, double hi) {
    if (!(hi > lo)) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace lrr
