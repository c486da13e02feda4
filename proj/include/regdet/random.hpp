#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "regdet/common.hpp"

namespace regdet {

// splitmix64 finalizer; used to derive independent stream seeds from
// (seed, index, tag) tuples so parallel generation stays schedule-invariant.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(mix64(mix64(seed) ^ a) ^ (b * 0x9e3779b97f4a7c15ULL + 1));
}

// Deterministic random stream. Distributions are implemented inline (rather
// than through std:: distributions) so draws are reproducible across standard
// library implementations.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : engine_(seed) {}

    static RandomStream derived(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        return RandomStream(derive_seed(seed, a, b));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive. Rejection keeps the draw unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        require<ConfigError>(lo <= hi, "uniform_int: empty range [", lo, ", ", hi, "]");
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(next_u64());  // full range
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return lo + static_cast<std::int64_t>(v % span);
    }

    // Box-Muller without spare caching; each draw consumes exactly two uniforms.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace regdet
