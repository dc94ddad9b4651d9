#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nvrelax/detection.hpp"
#include "nvrelax/errors.hpp"

// Per-tau, per-channel photon counts in normalization and signal windows,
// with and without the microwave pi pulse.

namespace nvrelax {

enum class Half { with_pi = 0, without_pi = 1 };
enum class Window { normalization = 0, signal = 1 };

inline const char* to_string(Half h) { return h == Half::with_pi ? "with_pi" : "without_pi"; }
inline const char* to_string(Window w) {
    return w == Window::normalization ? "normalization" : "signal";
}

struct TraceCell {
    double mean = 0.0;     // counts per repetition (raw) or counts/s (corrected)
    double std_dev = 0.0;  // spread over repetitions, same unit as mean
    bool clamped = false;
};

struct RelaxometryTrace {
    enum class Provenance { raw, corrected };

    std::vector<double> tau_s;
    bool has_with_pi = true;
    long repetitions = 1;
    int sweeps = 1;
    double laser_power_w = 0.0;
    double temperature_k = 0.0;
    std::uint64_t seed = 0;
    Provenance provenance = Provenance::raw;
    // read-window lengths, indexed by Window
    double window_duration_s[2] = {0.0, 0.0};
    std::vector<TraceCell> cells;
    std::vector<std::string> warnings;  // e.g. advisory detector-saturation notes

    static std::size_t index_of(std::size_t tau_i, Half h, Window w, Channel c) {
        return ((tau_i * 2 + static_cast<std::size_t>(h)) * 2 +
                static_cast<std::size_t>(w)) *
                   2 +
               static_cast<std::size_t>(c == Channel::minus ? 0 : 1);
    }

    void allocate() { cells.assign(tau_s.size() * 8, TraceCell{}); }

    TraceCell& at(std::size_t tau_i, Half h, Window w, Channel c) {
        return cells[index_of(tau_i, h, w, c)];
    }
    const TraceCell& at(std::size_t tau_i, Half h, Window w, Channel c) const {
        if (h == Half::with_pi && !has_with_pi)
            throw SequenceError("RelaxometryTrace: with-pi half not recorded");
        return cells[index_of(tau_i, h, w, c)];
    }

    // number of samples behind each cell mean
    double samples() const { return static_cast<double>(repetitions) * sweeps; }

    void validate() const {
        if (tau_s.empty()) throw SequenceError("RelaxometryTrace: empty tau sweep");
        if (cells.size() != tau_s.size() * 8)
            throw SequenceError("RelaxometryTrace: incomplete cell grid");
        if (repetitions < 1) throw SequenceError("RelaxometryTrace: repetitions must be >= 1");
        for (std::size_t i = 1; i < tau_s.size(); ++i)
            if (!(tau_s[i] > tau_s[i - 1]))
                throw SequenceError("RelaxometryTrace: tau sweep must be strictly ascending");
        for (const auto& c : cells)
            if (c.mean < 0.0 || c.std_dev < 0.0 || !std::isfinite(c.mean))
                throw DomainError("RelaxometryTrace: negative or non-finite cell");
    }
};

// Apply dark-count and ND corrections to every cell; means become corrected
// rates (counts/s). The provenance flag records the transformation.
inline RelaxometryTrace correct_trace(const RelaxometryTrace& trace,
                                      const DetectorConfig& det) {
    if (trace.provenance == RelaxometryTrace::Provenance::corrected)
        throw DomainError("correct_trace: trace is already corrected");
    RelaxometryTrace out = trace;
    out.provenance = RelaxometryTrace::Provenance::corrected;
    for (std::size_t ti = 0; ti < trace.tau_s.size(); ++ti) {
        for (Half h : {Half::with_pi, Half::without_pi}) {
            if (h == Half::with_pi && !trace.has_with_pi) continue;
            for (Window w : {Window::normalization, Window::signal}) {
                const double dur = trace.window_duration_s[static_cast<int>(w)];
                for (Channel c : {Channel::minus, Channel::zero}) {
                    const TraceCell& in = trace.cells[RelaxometryTrace::index_of(ti, h, w, c)];
                    TraceCell& oc = out.cells[RelaxometryTrace::index_of(ti, h, w, c)];
                    CorrectedRate cr = correct_counts(in.mean, dur, det, c);
                    oc.mean = cr.rate;
                    oc.std_dev = in.std_dev / dur / det.transmission(c);
                    oc.clamped = cr.clamped;
                }
            }
        }
    }
    return out;
}

}  // namespace nvrelax
