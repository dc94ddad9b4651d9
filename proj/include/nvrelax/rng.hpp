#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Seeding and sampling utilities. All randomness in the library flows through
// an explicit engine handle; substreams are derived with splitmix64 so that
// results are reproducible regardless of evaluation order.

namespace nvrelax {

using RngEngine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic substream key from a seed and up to three indices.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(seed ^ 0x2545f4914f6cdd1dULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x9e3779b97f4a7c15ULL));
    h = splitmix64(h ^ (c + 0xd1b54a32d192ed03ULL));
    return h;
}

inline RngEngine make_engine(std::uint64_t seed, std::uint64_t a = 0,
                             std::uint64_t b = 0, std::uint64_t c = 0) {
    return RngEngine(derive_seed(seed, a, b, c));
}

// Uniform double in [0,1) with 53 random bits; avoids the
// implementation-defined behavior of std::generate_canonical.
inline double uniform01(RngEngine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace detail {

// Poisson draw by sequential inversion; O(mean), use for small means only.
inline long poisson_inversion(double mean, RngEngine& rng) {
    const double limit = std::exp(-mean);
    long k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= uniform01(rng);
    } while (p > limit);
    return k - 1;
}

// Transformed-rejection Poisson sampler (Hormann's PTRS), valid for mean >= 10.
inline long poisson_ptrs(double mean, RngEngine& rng) {
    const double slog = std::log(mean);
    const double b = 0.931 + 2.53 * std::sqrt(mean);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = uniform01(rng) - 0.5;
        const double v = uniform01(rng);
        const double us = 0.5 - std::fabs(u);
        const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<long>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            kf * slog - mean - std::lgamma(kf + 1.0)) {
            return static_cast<long>(kf);
        }
    }
}

}  // namespace detail

// Poisson-distributed integer with the given mean. Hand-rolled so that seeded
// output is identical across standard-library implementations.
inline long poisson_draw(double mean, RngEngine& rng) {
    if (!(mean > 0.0)) return 0;
    if (mean < 10.0) return detail::poisson_inversion(mean, rng);
    return detail::poisson_ptrs(mean, rng);
}

}  // namespace nvrelax
