#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace radfuse {

/// Portable seeded generator.
///
/// The bit stream is std::mt19937_64 (fully specified by the standard). The
/// real-valued draws are derived here instead of through <random>
/// distributions, whose algorithms are implementation-defined:
///   uniform01: top 53 bits of one draw scaled by 2^-53, in [0, 1)
///   normal:    Box-Muller on two uniform01 draws (cosine branch only)
///   below(n):  uniform01 * n truncated, in [0, n)
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        const double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        const double mag = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * mag * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t below(std::uint64_t n) {
        auto k = static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and an index
// (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace radfuse
