#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace hpflex {

// Stream-splitting for reproducible per-building randomness: the same
// (seed, entity, stream) always yields the same sequence no matter how many
// other entities or streams are drawn from.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t entity, std::uint64_t stream) {
    return Rng{splitmix64(splitmix64(splitmix64(seed) ^ entity) ^ (stream * 0xD1B54A32D192ED03ull))};
}

// Portable draws; std distributions differ between standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace hpflex
