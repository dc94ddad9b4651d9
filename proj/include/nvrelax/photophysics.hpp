#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "nvrelax/core.hpp"
#include "nvrelax/detection.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/rng.hpp"
#include "nvrelax/trace.hpp"

// Forward simulation of the NV ensemble through pulse sequences. Evolution is
// piecewise analytic: every segment relaxes the state exponentially toward a
// segment-local target, so the simulated observables are exactly mono- or
// biexponential and can be checked against closed forms.

namespace nvrelax {

// Biexponential dark recharging NV0 -> NV-. The weight split applies to the
// NV0 excess above dark equilibrium when the dark interval begins.
struct RechargeParams {
    double t_r1 = 50e-6;            // s, fast
    double t_r2 = 2e-3;             // s, slow
    double weight1 = 0.6;           // fraction of the excess in the fast pool
    double n_minus_dark_eq = 0.5;   // dark-equilibrium NV- fraction
    // relative change of both recharge rates per kelvin about 294 K; zero by
    // default (temperature independence), nonzero only for negative-control
    // tests
    double temp_coefficient = 0.0;

    void validate() const {
        if (!(t_r1 > 0.0) || !(t_r2 > 0.0) || !(t_r1 < t_r2))
            throw DomainError("RechargeParams: need 0 < t_r1 < t_r2");
        if (!(weight1 >= 0.0 && weight1 <= 1.0))
            throw DomainError("RechargeParams: weight1 must be in [0, 1]");
        if (!(n_minus_dark_eq >= 0.0 && n_minus_dark_eq <= 1.0))
            throw DomainError("RechargeParams: n_minus_dark_eq must be in [0, 1]");
    }

    // Recharge times at a given temperature (identity unless the
    // negative-control hook is enabled).
    RechargeParams at_temperature(double temperature_k) const {
        if (temp_coefficient == 0.0) return *this;
        RechargeParams out = *this;
        const double factor = 1.0 + temp_coefficient * (temperature_k - 294.0);
        if (!(factor > 0.0))
            throw DomainError("RechargeParams: temperature hook drove rates negative");
        out.t_r1 = t_r1 / factor;
        out.t_r2 = t_r2 / factor;
        return out;
    }
};

struct EmissionParams {
    double brightness_minus = 4.0e10;  // counts/s per W at n_minus = 1
    double brightness_zero = 1.2e10;   // counts/s per W at n_minus = 0
    double spin_contrast = 0.35;       // fractional rate reduction at s_eff = 1
    double s_max = 0.90;               // pumping target at P >> sat_power_spin
    double sat_power_spin = 1.0e-7;    // W
    double sat_power_charge = 3.4e-4;  // W
    // pump time scales: rate(P) = P / (sat_power * t_unit)
    double t_spin_unit = 2.70e-3;      // s
    double t_charge_unit = 7.1e-5;     // s
    double f_low = 0.65;               // steady-state NV- fraction at P -> 0
    double f_high = 0.18;              // steady-state NV- fraction at P -> inf
    double crosstalk_minus_in_zero = 0.01;
    double crosstalk_zero_in_minus = 0.01;

    void validate() const {
        if (!(brightness_minus > 0.0) || !(brightness_zero > 0.0))
            throw DomainError("EmissionParams: brightnesses must be > 0");
        if (!(spin_contrast >= 0.0 && spin_contrast < 1.0))
            throw DomainError("EmissionParams: spin_contrast must be in [0, 1)");
        if (!(s_max >= 0.0 && s_max <= 1.0))
            throw DomainError("EmissionParams: s_max must be in [0, 1]");
        if (!(sat_power_spin > 0.0) || !(sat_power_charge > 0.0))
            throw DomainError("EmissionParams: saturation powers must be > 0");
        if (!(t_spin_unit > 0.0) || !(t_charge_unit > 0.0))
            throw DomainError("EmissionParams: pump time scales must be > 0");
        if (!(f_low > 0.0 && f_low < 1.0) || !(f_high > 0.0 && f_high < 1.0) ||
            !(f_high < f_low))
            throw DomainError("EmissionParams: need 0 < f_high < f_low < 1");
        if (!(crosstalk_minus_in_zero >= 0.0 && crosstalk_minus_in_zero < 1.0) ||
            !(crosstalk_zero_in_minus >= 0.0 && crosstalk_zero_in_minus < 1.0))
            throw DomainError("EmissionParams: crosstalk must be in [0, 1)");
    }

    double charge_pump_rate(double power_w) const {
        return power_w / (sat_power_charge * t_charge_unit);
    }
    double spin_pump_rate(double power_w) const {
        return power_w / (sat_power_spin * t_spin_unit);
    }
    double spin_target(double power_w) const {
        return s_max * power_w / (power_w + sat_power_spin);
    }
};

// Steady-state NV- fraction under continuous illumination,
//   f(P) = f_high + (f_low - f_high) / (1 + P / sat_power_charge),
// strictly decreasing in P.
inline double steady_state_fraction(double power_w, const EmissionParams& params) {
    if (!(power_w >= 0.0)) throw DomainError("steady_state_fraction: power must be >= 0");
    return params.f_high +
           (params.f_low - params.f_high) / (1.0 + power_w / params.sat_power_charge);
}

// Instantaneous charge fraction and spin polarization of the ensemble.
// s = 0 is the thermally mixed state; the laser pumps s toward positive
// values. The pool members carry the biexponential split of the NV0 excess
// between dark segments; they are bookkeeping, not independent state.
struct EnsembleState {
    double n_minus = 0.5;  // NV- charge fraction, NV0 fraction is 1 - n_minus
    double s_addr = 0.0;   // polarization of the microwave-addressed orientation
    double s_rest = 0.0;   // mean polarization of the other three orientations

    bool pools_valid = false;
    double pool1 = 0.0;
    double pool2 = 0.0;

    double s_eff() const { return (s_addr + 3.0 * s_rest) / 4.0; }

    void validate() const {
        if (!(n_minus >= 0.0 && n_minus <= 1.0))
            throw DomainError("EnsembleState: n_minus must be in [0, 1]");
        if (!(s_addr >= -1.0 && s_addr <= 1.0) || !(s_rest >= -1.0 && s_rest <= 1.0))
            throw DomainError("EnsembleState: polarizations must be in [-1, 1]");
    }

    static EnsembleState dark_equilibrium(const RechargeParams& recharge) {
        EnsembleState st;
        st.n_minus = recharge.n_minus_dark_eq;
        st.s_addr = 0.0;
        st.s_rest = 0.0;
        st.pools_valid = true;
        st.pool1 = 0.0;
        st.pool2 = 0.0;
        return st;
    }
};

// Relaxation in the dark: spin polarization decays with T1; the NV0 excess
// above dark equilibrium decays biexponentially. The weight split is applied
// when the pools are stale (first dark step after illumination), so chained
// dark steps compose exactly.
inline EnsembleState evolve_dark(EnsembleState state, double dt_s, double t1_s,
                                 const RechargeParams& recharge) {
    if (!(dt_s >= 0.0)) throw DomainError("evolve_dark: dt must be >= 0");
    if (!(t1_s > 0.0)) throw DomainError("evolve_dark: t1 must be > 0");
    if (dt_s == 0.0) return state;

    const double spin_factor = std::exp(-dt_s / t1_s);
    state.s_addr *= spin_factor;
    state.s_rest *= spin_factor;

    const double n0_eq = 1.0 - recharge.n_minus_dark_eq;
    if (!state.pools_valid) {
        const double excess = (1.0 - state.n_minus) - n0_eq;
        state.pool1 = recharge.weight1 * excess;
        state.pool2 = (1.0 - recharge.weight1) * excess;
        state.pools_valid = true;
    }
    state.pool1 *= std::exp(-dt_s / recharge.t_r1);
    state.pool2 *= std::exp(-dt_s / recharge.t_r2);
    state.n_minus = 1.0 - (n0_eq + state.pool1 + state.pool2);
    return state;
}

// Illumination: exponential approach of the charge fraction toward the
// steady state and of both spin polarizations toward the pump target, with
// rates linear in the laser power. P = 0 is a pure hold. Spin-lattice
// relaxation is neglected during laser segments (pump rates dominate 1/T1 at
// all modeled powers).
inline EnsembleState evolve_laser(EnsembleState state, double dt_s, double power_w,
                                  const EmissionParams& params) {
    if (!(dt_s >= 0.0)) throw DomainError("evolve_laser: dt must be >= 0");
    if (!(power_w >= 0.0)) throw DomainError("evolve_laser: power must be >= 0");
    if (dt_s == 0.0 || power_w == 0.0) return state;

    const double f = steady_state_fraction(power_w, params);
    const double charge_factor = std::exp(-params.charge_pump_rate(power_w) * dt_s);
    state.n_minus = f + (state.n_minus - f) * charge_factor;

    const double s_t = params.spin_target(power_w);
    const double spin_factor = std::exp(-params.spin_pump_rate(power_w) * dt_s);
    state.s_addr = s_t + (state.s_addr - s_t) * spin_factor;
    state.s_rest = s_t + (state.s_rest - s_t) * spin_factor;

    state.pools_valid = false;
    return state;
}

// Resonant microwave pi pulse: inverts the addressed orientation only.
inline EnsembleState apply_pi_pulse(EnsembleState state) {
    state.s_addr = -state.s_addr;
    return state;
}

struct EmissionRates {
    double ch_minus = 0.0;  // counts/s into the >665 nm (NV-) channel
    double ch_zero = 0.0;   // counts/s into the <600 nm (NV0) channel
};

// Ideal channel rates for a given state; filter leakage mixes a small
// fraction of each species' light into the other channel.
inline EmissionRates emission_rates(const EnsembleState& state, double power_w,
                                    const EmissionParams& params) {
    if (!(power_w >= 0.0)) throw DomainError("emission_rates: power must be >= 0");
    const double r_minus = params.brightness_minus * power_w * state.n_minus *
                           (1.0 - params.spin_contrast * state.s_eff());
    const double r_zero = params.brightness_zero * power_w * (1.0 - state.n_minus);
    EmissionRates out;
    out.ch_minus = r_minus + params.crosstalk_zero_in_minus * r_zero;
    out.ch_zero = r_zero + params.crosstalk_minus_in_zero * r_minus;
    return out;
}

// ---------------------------------------------------------------------------
// Pulse sequences
// ---------------------------------------------------------------------------

struct ReadWindow {
    Window label = Window::signal;
    double duration_s = 0.0;
};

struct LaserSegment {
    double power_w = 0.0;
    double duration_s = 0.0;
    std::vector<ReadWindow> reads;  // anchored at the start of the segment
};

struct DarkSegment {
    double duration_s = 0.0;
    bool is_tau = false;  // duration taken from the sweep value
};

struct PiSegment {};

using Segment = std::variant<LaserSegment, DarkSegment, PiSegment>;

struct PulseSequence {
    std::vector<Segment> segments;
    std::vector<double> tau_sweep_s;
    long repetitions = 1;
    int sweeps = 1;
    double pause_s = 0.0;  // t_p between cycles

    bool has_pi() const {
        for (const auto& s : segments)
            if (std::holds_alternative<PiSegment>(s)) return true;
        return false;
    }

    PulseSequence without_pi() const {
        PulseSequence out = *this;
        out.segments.clear();
        for (const auto& s : segments)
            if (!std::holds_alternative<PiSegment>(s)) out.segments.push_back(s);
        return out;
    }

    // Power of the laser segment carrying the signal read window.
    double readout_power_w() const {
        for (const auto& s : segments)
            if (const auto* l = std::get_if<LaserSegment>(&s))
                for (const auto& r : l->reads)
                    if (r.label == Window::signal) return l->power_w;
        return 0.0;
    }

    void scale_powers(double power_w) {
        for (auto& s : segments)
            if (auto* l = std::get_if<LaserSegment>(&s)) l->power_w = power_w;
    }

    void validate() const {
        if (segments.empty()) throw SequenceError("PulseSequence: no segments");
        if (repetitions < 1) throw SequenceError("PulseSequence: repetitions must be >= 1");
        if (sweeps < 1) throw SequenceError("PulseSequence: sweeps must be >= 1");
        if (pause_s < 0.0) throw SequenceError("PulseSequence: pause must be >= 0");
        if (tau_sweep_s.empty()) throw SequenceError("PulseSequence: empty tau sweep");
        for (std::size_t i = 0; i < tau_sweep_s.size(); ++i) {
            if (!(tau_sweep_s[i] > 0.0))
                throw SequenceError("PulseSequence: tau values must be > 0");
            if (i > 0 && !(tau_sweep_s[i] > tau_sweep_s[i - 1]))
                throw SequenceError("PulseSequence: tau sweep must be strictly ascending");
        }
        int n_tau = 0, n_pi = 0, n_norm = 0, n_sig = 0;
        for (const auto& s : segments) {
            if (const auto* l = std::get_if<LaserSegment>(&s)) {
                if (!(l->power_w >= 0.0) || !(l->duration_s > 0.0))
                    throw SequenceError("PulseSequence: invalid laser segment");
                for (const auto& r : l->reads) {
                    if (!(r.duration_s > 0.0))
                        throw SequenceError("PulseSequence: read window needs duration > 0");
                    if (r.duration_s > l->duration_s + 1e-15)
                        throw SequenceError(
                            "PulseSequence: read window longer than its laser segment");
                    (r.label == Window::normalization ? n_norm : n_sig) += 1;
                }
            } else if (const auto* d = std::get_if<DarkSegment>(&s)) {
                if (d->is_tau)
                    ++n_tau;
                else if (!(d->duration_s >= 0.0))
                    throw SequenceError("PulseSequence: dark duration must be >= 0");
            } else {
                ++n_pi;
            }
        }
        if (n_tau != 1)
            throw SequenceError("PulseSequence: need exactly one 'DARK tau' segment");
        if (n_norm != 1 || n_sig != 1)
            throw SequenceError(
                "PulseSequence: need exactly one normalization and one signal read window");
        if (n_pi > 1) throw SequenceError("PulseSequence: at most one pi pulse");
    }
};

namespace detail {

// integral of exp(-rate * t) over [0, window]
inline double exp_window_integral(double rate, double window_s) {
    if (rate <= 0.0) return window_s;
    return -std::expm1(-rate * window_s) / rate;
}

// Expected ideal counts (no detector effects) in a read window anchored at
// the start of a laser segment, integrating the evolving state analytically.
inline EmissionRates expected_window_counts(const EnsembleState& entry, double window_s,
                                            double power_w, const EmissionParams& em) {
    if (power_w == 0.0) return {};
    const double f = steady_state_fraction(power_w, em);
    const double s_t = em.spin_target(power_w);
    const double gc = em.charge_pump_rate(power_w);
    const double gp = em.spin_pump_rate(power_w);
    const double dn = entry.n_minus - f;
    const double ds = entry.s_eff() - s_t;

    const double i_c = exp_window_integral(gc, window_s);
    const double i_p = exp_window_integral(gp, window_s);
    const double i_cp = exp_window_integral(gc + gp, window_s);

    const double int_n = f * window_s + dn * i_c;
    const double int_ns = f * s_t * window_s + f * ds * i_p + dn * s_t * i_c + dn * ds * i_cp;

    const double counts_minus =
        em.brightness_minus * power_w * (int_n - em.spin_contrast * int_ns);
    const double counts_zero = em.brightness_zero * power_w * (window_s - int_n);

    EmissionRates out;
    out.ch_minus = counts_minus + em.crosstalk_zero_in_minus * counts_zero;
    out.ch_zero = counts_zero + em.crosstalk_minus_in_zero * counts_minus;
    return out;
}

}  // namespace detail

// Inputs for run_sequence: the physical model pieces it needs.
struct SequenceModel {
    TemperatureModel t1_model;
    RechargeParams recharge;
    EmissionParams emission;
    DetectorConfig detector;
    double boltzmann_ev_per_k = kBoltzmannEvPerK;
};

// Execute the sequence for every tau and every half (with and without the pi
// pulse when the sequence contains one). Each cycle starts from dark
// equilibrium (the pause t_p is chosen long against the recharge times).
// Per-repetition counts are Poisson-sampled through the detection model; each
// (tau, half, window, channel) cell uses its own deterministic substream, so
// results do not depend on evaluation order.
inline RelaxometryTrace run_sequence(const PulseSequence& seq, const SequenceModel& model,
                                     double temperature_k, std::uint64_t seed) {
    seq.validate();
    model.recharge.validate();
    model.emission.validate();
    model.detector.validate();

    const double t1_s = 1.0 / t1_rate(model.t1_model, temperature_k, model.boltzmann_ev_per_k);
    const RechargeParams recharge = model.recharge.at_temperature(temperature_k);

    RelaxometryTrace trace;
    trace.tau_s = seq.tau_sweep_s;
    trace.has_with_pi = seq.has_pi();
    trace.repetitions = seq.repetitions;
    trace.sweeps = seq.sweeps;
    trace.laser_power_w = seq.readout_power_w();
    trace.temperature_k = temperature_k;
    trace.seed = seed;
    trace.allocate();
    for (const auto& s : seq.segments)
        if (const auto* l = std::get_if<LaserSegment>(&s))
            for (const auto& r : l->reads)
                trace.window_duration_s[static_cast<int>(r.label)] = r.duration_s;

    const long draws = seq.repetitions * seq.sweeps;

    for (std::size_t ti = 0; ti < seq.tau_sweep_s.size(); ++ti) {
        const double tau = seq.tau_sweep_s[ti];
        for (Half half : {Half::with_pi, Half::without_pi}) {
            if (half == Half::with_pi && !trace.has_with_pi) continue;

            EnsembleState state = EnsembleState::dark_equilibrium(recharge);
            EmissionRates window_counts[2];  // ideal counts, indexed by Window

            for (const auto& seg : seq.segments) {
                if (const auto* l = std::get_if<LaserSegment>(&seg)) {
                    for (const auto& r : l->reads)
                        window_counts[static_cast<int>(r.label)] =
                            detail::expected_window_counts(state, r.duration_s, l->power_w,
                                                           model.emission);
                    state = evolve_laser(state, l->duration_s, l->power_w, model.emission);
                } else if (const auto* d = std::get_if<DarkSegment>(&seg)) {
                    state = evolve_dark(state, d->is_tau ? tau : d->duration_s, t1_s, recharge);
                } else if (half == Half::with_pi) {
                    state = apply_pi_pulse(state);
                }
            }
            if (seq.pause_s > 0.0) state = evolve_dark(state, seq.pause_s, t1_s, recharge);
            state.validate();

            for (Window w : {Window::normalization, Window::signal}) {
                const double dur = trace.window_duration_s[static_cast<int>(w)];
                const EmissionRates& ideal = window_counts[static_cast<int>(w)];
                for (Channel c : {Channel::minus, Channel::zero}) {
                    const double counts = (c == Channel::minus) ? ideal.ch_minus : ideal.ch_zero;
                    const double rate = counts / dur;
                    // advisory only: the detector model has no dead time
                    if (trace.warnings.empty() &&
                        rate * model.detector.transmission(c) + model.detector.dark_rate(c) >
                            model.detector.saturation_rate)
                        trace.warnings.push_back(
                            std::string("recorded rate in the ") + to_string(c) +
                            " channel exceeds the advisory saturation rate " +
                            std::to_string(model.detector.saturation_rate) + " counts/s");
                    TraceCell& cell = trace.at(ti, half, w, c);
                    if (!model.detector.noise) {
                        cell.mean = expected_counts(rate, dur, model.detector, c);
                        cell.std_dev = 0.0;
                        continue;
                    }
                    const std::uint64_t key =
                        static_cast<std::uint64_t>(half) * 4 +
                        static_cast<std::uint64_t>(w) * 2 +
                        (c == Channel::minus ? 0 : 1);
                    RngEngine rng = make_engine(seed, ti, key);
                    double sum = 0.0, sumsq = 0.0;
                    for (long rep = 0; rep < draws; ++rep) {
                        const double k =
                            static_cast<double>(sample_counts(rate, dur, model.detector, c, rng));
                        sum += k;
                        sumsq += k * k;
                    }
                    const double mean = sum / static_cast<double>(draws);
                    double var = 0.0;
                    if (draws > 1)
                        var = std::max(0.0, (sumsq - sum * mean) /
                                                static_cast<double>(draws - 1));
                    cell.mean = mean;
                    cell.std_dev = std::sqrt(var);
                }
            }
        }
    }
    trace.validate();
    return trace;
}

}  // namespace nvrelax
