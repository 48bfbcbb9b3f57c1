#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace asgd {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent substream seed from a root seed and a path of labels.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix64(root);
    for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

/// Stream labels, so that schedule randomness never shares a stream with gradient noise.
namespace stream {
inline constexpr std::uint64_t schedule = 1;
inline constexpr std::uint64_t process_noise = 2;
inline constexpr std::uint64_t tau = 3;
inline constexpr std::uint64_t inputs = 4;
inline constexpr std::uint64_t faults = 5;
inline constexpr std::uint64_t run = 6;
}  // namespace stream

}  // namespace asgd
