#pragma once

#include <cmath>
#include <random>
#include <vector>

// Shared test utilities: independent high-precision oracles and small
// generators for property-style checks.

namespace testutil {

// Independent long-double evaluation of the phonon relaxation law; used as
// the arbitrary-precision oracle for t1_rate.
inline long double t1_rate_oracle(long double a1, long double a2, long double a3,
                                  long double delta, long double boltzmann,
                                  long double temperature) {
    return a1 + a2 / expm1l(delta / (boltzmann * temperature)) +
           a3 * powl(temperature, 5.0L);
}

// Weighted straight-line fit in extended precision via the normal equations.
struct LinearOracle {
    long double slope = 0, intercept = 0;
};

inline LinearOracle weighted_linear_oracle(const std::vector<double>& x,
                                           const std::vector<double>& y,
                                           const std::vector<double>& sigma) {
    long double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const long double w = 1.0L / ((long double)sigma[i] * sigma[i]);
        sw += w;
        swx += w * x[i];
        swy += w * y[i];
        swxx += w * (long double)x[i] * x[i];
        swxy += w * (long double)x[i] * y[i];
    }
    const long double det = sw * swxx - swx * swx;
    return {(sw * swxy - swx * swy) / det, (swxx * swy - swx * swxy) / det};
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace testutil
