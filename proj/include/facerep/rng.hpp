#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace facerep {

// 64-bit FNV-1a, used for stage labels and config hashing.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// All randomness flows from one global seed through labeled derivations, so
// each stage (and each worker within a stage) gets its own stream.
inline uint64_t derive_seed(uint64_t seed, std::string_view label) {
    return splitmix64(seed ^ fnv1a64(label));
}

inline uint64_t derive_seed(uint64_t seed, std::string_view label, uint64_t index) {
    return splitmix64(derive_seed(seed, label) ^ splitmix64(index + 0x51ed270b7a4ff9d3ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed, std::string_view label) {
    return Rng(derive_seed(seed, label));
}

inline Rng make_rng(uint64_t seed, std::string_view label, uint64_t index) {
    return Rng(derive_seed(seed, label, index));
}

}  // namespace facerep
