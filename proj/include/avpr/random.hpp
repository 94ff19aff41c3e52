#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace avpr {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of an independent stream identified by a path of integers, e.g.
/// derive_seed(global, {domain, episode}).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix64(base);
    for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> path = {}) {
    return Rng(derive_seed(base, path));
}

// Stream salts, so that e.g. exploration and observation noise never share a stream.
namespace salt {
inline constexpr std::uint64_t world = 0x77;
inline constexpr std::uint64_t episode = 0xe9;
inline constexpr std::uint64_t explore = 0xe7;
inline constexpr std::uint64_t planner = 0x91;
inline constexpr std::uint64_t init = 0x1a;
inline constexpr std::uint64_t split = 0x5b;
inline constexpr std::uint64_t batch = 0xba;
inline constexpr std::uint64_t bootstrap = 0xb0;
inline constexpr std::uint64_t dataset = 0xda;
}  // namespace salt

}  // namespace avpr
