#pragma once

#include <cmath>
#include <string>

#include "nvrelax/core.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/rng.hpp"

// Converts ideal emission rates to recorded photon counts and back: shot
// noise, dark counts and ND-filter attenuation, with their corrections.

namespace nvrelax {

enum class Channel { minus, zero };

inline const char* to_string(Channel c) { return c == Channel::minus ? "minus" : "zero"; }

struct DetectorConfig {
    double dark_rate_minus = 250.0;   // counts/s
    double dark_rate_zero = 180.0;    // counts/s
    // effective ND transmission in each channel's spectral band
    double nd_transmission_minus = 1.0;
    double nd_transmission_zero = 1.0;
    double saturation_rate = 1.0e7;   // counts/s, advisory only
    bool noise = true;                // false: expected counts, no sampling

    double dark_rate(Channel c) const {
        return c == Channel::minus ? dark_rate_minus : dark_rate_zero;
    }
    double transmission(Channel c) const {
        return c == Channel::minus ? nd_transmission_minus : nd_transmission_zero;
    }

    void validate() const {
        if (!(nd_transmission_minus > 0.0 && nd_transmission_minus <= 1.0) ||
            !(nd_transmission_zero > 0.0 && nd_transmission_zero <= 1.0))
            throw DomainError("DetectorConfig: nd_transmission must be in (0, 1]");
        if (dark_rate_minus < 0.0 || dark_rate_zero < 0.0)
            throw DomainError("DetectorConfig: dark rates must be >= 0");
    }
};

// Expected recorded counts for an ideal emission rate over a window.
inline double expected_counts(double rate, double duration_s, const DetectorConfig& cfg,
                              Channel channel) {
    return (rate * cfg.transmission(channel) + cfg.dark_rate(channel)) * duration_s;
}

// Poisson draw of recorded counts with mean
// (rate * transmission + dark_rate) * duration.
inline long sample_counts(double rate, double duration_s, const DetectorConfig& cfg,
                          Channel channel, RngEngine& rng) {
    if (!(rate >= 0.0)) throw DomainError("sample_counts: rate must be >= 0");
    if (!(duration_s > 0.0)) throw DomainError("sample_counts: duration must be > 0");
    const double mean = expected_counts(rate, duration_s, cfg, channel);
    if (!cfg.noise) return static_cast<long>(std::llround(mean));
    return poisson_draw(mean, rng);
}

struct CorrectedRate {
    double rate = 0.0;      // counts/s after dark-count and ND correction
    double error = 0.0;
    bool clamped = false;   // negative corrected rate was clamped to zero
};

// Invert the detector model: (raw/duration - dark) / transmission, with the
// shot-noise error sqrt(raw)/duration/transmission.
inline CorrectedRate correct_counts(double raw_counts, double duration_s,
                                    const DetectorConfig& cfg, Channel channel) {
    if (!(duration_s > 0.0)) throw DomainError("correct_counts: duration must be > 0");
    const double trans = cfg.transmission(channel);
    CorrectedRate out;
    out.rate = (raw_counts / duration_s - cfg.dark_rate(channel)) / trans;
    out.error = std::sqrt(std::max(0.0, raw_counts)) / duration_s / trans;
    if (out.rate < 0.0) {
        out.rate = 0.0;
        out.clamped = true;
    }
    return out;
}

}  // namespace nvrelax
