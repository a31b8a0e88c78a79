#pragma once

#include <cstdint>
#include <random>

namespace brima {

// splitmix64 finalizer; used to derive independent generator seeds from a
// run seed plus a short id path, so adding or removing one consumer does not
// shift the draws of any other.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a = 0,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
    return std::mt19937_64(mix_seed(mix_seed(mix_seed(seed, a), b), c));
}

// Stream ids for the derived generators used across the library. Tests that
// replay a training loop step by step rely on these staying stable.
namespace rng_stream {
constexpr std::uint64_t kInit = 1;
constexpr std::uint64_t kShuffle = 2;
constexpr std::uint64_t kReplay = 3;
constexpr std::uint64_t kSimulate = 4;
constexpr std::uint64_t kSelect = 5;
constexpr std::uint64_t kGeneratorSetup = 6;
constexpr std::uint64_t kGeneratorTask = 7;
constexpr std::uint64_t kMissing = 8;
}  // namespace rng_stream

}  // namespace brima
