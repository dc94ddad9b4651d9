#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nvrelax/config.hpp"
#include "nvrelax/core.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/relaxometry.hpp"
#include "nvrelax/spectra.hpp"
#include "nvrelax/synth.hpp"

// End-to-end analysis pipelines shared by the CLI and the acceptance suite:
// dataset simulation, decomposition with kappa and fraction tables, mapping
// calibration and the relaxometry temperature scan with its derived fits.

namespace nvrelax {

// ---------------------------------------------------------------------------
// Spectra dataset
// ---------------------------------------------------------------------------

struct SpectraDataset {
    std::vector<double> grid;
    std::vector<double> temps_k;
    std::vector<double> map_powers_w;
    std::vector<double> cal_powers_w;
    // indexed [temperature][power]
    std::vector<std::vector<Spectrum>> map_spectra;
    std::vector<std::vector<Spectrum>> cal_spectra;
};

inline std::vector<double> default_map_powers() {
    return {8e-6, 2e-5, 5e-5, 1e-4, 1.6e-4, 2.4e-4, 3.2e-4, 4.3e-4, 5.6e-4, 1e-3, 2e-3, 4e-3};
}

inline std::vector<double> default_cal_powers() {
    return {2e-6, 4e-6, 6e-6, 8e-6, 1e-5, 1.2e-5};
}

inline std::vector<double> default_temperatures() {
    std::vector<double> t(8);
    for (int i = 0; i < 8; ++i) t[i] = 294.0 + 54.0 * i / 7.0;
    return t;
}

// Simulate both campaigns: the fraction map (charge steady state vs power)
// and the kappa calibration series (ratio-locked, linear in power). Each
// spectrum has its own deterministic substream.
inline SpectraDataset simulate_spectra_dataset(const PhysicsConfig& physics,
                                               const SynthParams& synth,
                                               const std::vector<double>& temps_k,
                                               const std::vector<double>& map_powers_w,
                                               const std::vector<double>& cal_powers_w,
                                               std::uint64_t seed, bool noise = true) {
    physics.validate();
    synth.validate();
    if (temps_k.empty()) throw DomainError("simulate_spectra_dataset: no temperatures");
    SpectraDataset ds;
    ds.grid = make_wavelength_grid(synth);
    ds.temps_k = temps_k;
    ds.map_powers_w = map_powers_w;
    ds.cal_powers_w = cal_powers_w;
    for (std::size_t ti = 0; ti < temps_k.size(); ++ti) {
        std::vector<Spectrum> map_row, cal_row;
        for (std::size_t pi = 0; pi < map_powers_w.size(); ++pi) {
            RngEngine rng = make_engine(seed, 1, ti, pi);
            map_row.push_back(simulate_map_spectrum(ds.grid, map_powers_w[pi], temps_k[ti],
                                                    physics, synth, rng, noise));
        }
        for (std::size_t pi = 0; pi < cal_powers_w.size(); ++pi) {
            RngEngine rng = make_engine(seed, 2, ti, pi);
            cal_row.push_back(simulate_calibration_spectrum(
                ds.grid, cal_powers_w[pi], temps_k[ti], physics, synth, rng, noise));
        }
        ds.map_spectra.push_back(std::move(map_row));
        ds.cal_spectra.push_back(std::move(cal_row));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Decomposition pipeline
// ---------------------------------------------------------------------------

struct FractionEntry {
    double power_w = 0.0;
    double temperature_k = 0.0;
    double c_minus = 0.0;
    double c_zero = 0.0;
    double c_sigma = 0.0;
    ValueWithError fraction;
};

struct DecomposeOutput {
    double delta0 = 0.0;        // mean over temperatures
    double delta_minus = 0.0;
    std::vector<double> temps_k;
    std::vector<double> powers_w;
    std::vector<BasisSet> bases;                       // per temperature
    std::vector<KappaEstimate> kappas;                 // per temperature
    std::vector<std::vector<FractionEntry>> fractions; // [temperature][power]
    std::vector<double> variance_per_power;            // across temperatures
    std::vector<ZplFit> zpl_minus;                     // per temperature
    std::vector<ZplFit> zpl_zero;
};

// Reference spectra for basis construction: the lowest map power is the
// NV--dominated reference, the highest the NV0-dominated one.
inline void find_reference_indices(const std::vector<double>& powers, std::size_t& lo,
                                   std::size_t& hi) {
    if (powers.size() < 2)
        throw InsufficientDataError(
            "decompose pipeline: need a low-power reference (I_-^pre role) and a "
            "high-power reference (I_0^pre role) in the map series");
    lo = 0;
    hi = 0;
    for (std::size_t i = 1; i < powers.size(); ++i) {
        if (powers[i] < powers[lo]) lo = i;
        if (powers[i] > powers[hi]) hi = i;
    }
}

// Full decomposition chain: per-temperature delta optimization (means kept
// constant across temperatures), per-temperature basis construction and kappa
// estimation, fraction map with propagated errors, cross-temperature variance
// and ZPL fits on the low-power reference spectra.
inline DecomposeOutput run_decompose_pipeline(const SpectraDataset& ds, double delta_step = 0.005) {
    DecomposeOutput out;
    out.temps_k = ds.temps_k;
    out.powers_w = ds.map_powers_w;

    std::size_t lo = 0, hi = 0;
    find_reference_indices(ds.map_powers_w, lo, hi);
    const std::size_t n_temp = ds.temps_k.size();

    // per-temperature optimal deltas, then their means
    double sum_d0 = 0.0;
    std::vector<double> d0(n_temp);
    for (std::size_t ti = 0; ti < n_temp; ++ti) {
        d0[ti] = optimize_delta0(ds.map_spectra[ti][hi], ds.map_spectra[ti][lo], delta_step);
        sum_d0 += d0[ti];
    }
    out.delta0 = sum_d0 / static_cast<double>(n_temp);

    double sum_dm = 0.0;
    for (std::size_t ti = 0; ti < n_temp; ++ti) {
        const BasisSet partial =
            build_basis(ds.map_spectra[ti][hi], ds.map_spectra[ti][lo], out.delta0, 0.0);
        sum_dm += optimize_delta_minus(ds.map_spectra[ti][hi], partial, delta_step);
    }
    out.delta_minus = sum_dm / static_cast<double>(n_temp);

    for (std::size_t ti = 0; ti < n_temp; ++ti)
        out.bases.push_back(build_basis(ds.map_spectra[ti][hi], ds.map_spectra[ti][lo],
                                        out.delta0, out.delta_minus));

    // kappa per temperature from the calibration series
    for (std::size_t ti = 0; ti < n_temp; ++ti) {
        std::vector<std::pair<double, Spectrum>> series;
        for (std::size_t pi = 0; pi < ds.cal_powers_w.size(); ++pi)
            series.emplace_back(ds.cal_powers_w[pi], ds.cal_spectra[ti][pi]);
        out.kappas.push_back(estimate_kappa(series, out.bases[ti]));
    }

    // fraction map with errors from the decomposition and the kappa fit
    for (std::size_t ti = 0; ti < n_temp; ++ti) {
        std::vector<FractionEntry> row;
        for (std::size_t pi = 0; pi < ds.map_powers_w.size(); ++pi) {
            const Decomposition dec = decompose(ds.map_spectra[ti][pi], out.bases[ti]);
            FractionEntry e;
            e.power_w = ds.map_powers_w[pi];
            e.temperature_k = ds.temps_k[ti];
            e.c_minus = dec.c_minus;
            e.c_zero = dec.c_zero;
            e.c_sigma = dec.c_sigma;
            e.fraction =
                nv_minus_fraction(dec, out.kappas[ti].kappa, out.kappas[ti].std_error);
            row.push_back(e);
        }
        out.fractions.push_back(std::move(row));
    }

    // the cross-temperature variance needs at least two temperatures; a
    // single-temperature dataset simply has no variance column
    if (n_temp >= 2) {
        for (std::size_t pi = 0; pi < ds.map_powers_w.size(); ++pi) {
            std::vector<double> fr;
            for (std::size_t ti = 0; ti < n_temp; ++ti)
                fr.push_back(out.fractions[ti][pi].fraction.value);
            out.variance_per_power.push_back(fraction_variance(fr));
        }
    }

    for (std::size_t ti = 0; ti < n_temp; ++ti) {
        out.zpl_minus.push_back(fit_zpl(ds.map_spectra[ti][lo], kZplWindowNvMinusNm[0],
                                        kZplWindowNvMinusNm[1], SpectralComponent::nv_minus));
        out.zpl_zero.push_back(fit_zpl(ds.map_spectra[ti][lo], kZplWindowNvZeroNm[0],
                                       kZplWindowNvZeroNm[1], SpectralComponent::nv_zero));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Charge-ratio mapping calibration
// ---------------------------------------------------------------------------

struct MappingCalibration {
    std::vector<double> temps_k;
    std::vector<ChargeRatioMapping> mappings;  // per temperature

    const ChargeRatioMapping& at_temperature(double t) const {
        for (std::size_t i = 0; i < temps_k.size(); ++i)
            if (std::fabs(temps_k[i] - t) < 1e-6) return mappings[i];
        throw CalibrationError("MappingCalibration: no mapping calibrated at " +
                               std::to_string(t) + " K");
    }
};

// Pair the spectra-derived charge ratios with simulated SPCM count-rate
// ratios at the same powers and fit the mapping per temperature. Count rates
// are recorded at the CW steady state over cal_exposure_s and corrected for
// dark counts and ND transmission.
inline MappingCalibration calibrate_mapping_pipeline(const DecomposeOutput& dec,
                                                     const PhysicsConfig& physics,
                                                     const DetectorConfig& detector,
                                                     std::uint64_t seed,
                                                     double cal_exposure_s = 1.0) {
    MappingCalibration out;
    out.temps_k = dec.temps_k;
    for (std::size_t ti = 0; ti < dec.temps_k.size(); ++ti) {
        std::vector<ValueWithError> charge, counts;
        for (std::size_t pi = 0; pi < dec.powers_w.size(); ++pi) {
            const FractionEntry& e = dec.fractions[ti][pi];
            const double f = e.fraction.value;
            if (!(f > 0.0 && f < 1.0))
                throw CalibrationError("calibrate_mapping_pipeline: fraction outside (0,1)");
            const double ratio = f / (1.0 - f);
            const double ratio_err = e.fraction.error / ((1.0 - f) * (1.0 - f));
            charge.push_back({ratio, ratio_err});

            EnsembleState st;
            st.n_minus = steady_state_fraction(e.power_w, physics.emission);
            st.s_addr = st.s_rest = physics.emission.spin_target(e.power_w);
            const EmissionRates rates = emission_rates(st, e.power_w, physics.emission);

            RngEngine rng_m = make_engine(seed, 3, ti, pi * 2);
            RngEngine rng_z = make_engine(seed, 3, ti, pi * 2 + 1);
            const double raw_m = static_cast<double>(
                sample_counts(rates.ch_minus, cal_exposure_s, detector, Channel::minus, rng_m));
            const double raw_z = static_cast<double>(
                sample_counts(rates.ch_zero, cal_exposure_s, detector, Channel::zero, rng_z));
            const CorrectedRate cm = correct_counts(raw_m, cal_exposure_s, detector, Channel::minus);
            const CorrectedRate cz = correct_counts(raw_z, cal_exposure_s, detector, Channel::zero);
            if (!(cz.rate > 0.0))
                throw CalibrationError("calibrate_mapping_pipeline: zero NV0 count rate");
            const double x = cm.rate / cz.rate;
            const double xr = x * std::sqrt(cm.error / cm.rate * (cm.error / cm.rate) +
                                            cz.error / cz.rate * (cz.error / cz.rate));
            counts.push_back({x, xr});
        }
        out.mappings.push_back(calibrate_charge_ratio_mapping(charge, counts));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Relaxometry pipeline
// ---------------------------------------------------------------------------

struct FlatnessCheck {
    ValueWithError mean;        // inverse-variance weighted mean
    double chi2_reduced = 0.0;  // of the zero-slope model
    FitResult line;             // weighted straight-line fit (slope, intercept)
    bool ok = false;
};

// A scan cell contributes to cross-temperature consistency checks only when
// its rate is identified: finite, with an error smaller than the value
// itself. Near-degenerate fits come back with blown-up covariances whose
// near-zero weights would make the weighted design numerically singular.
inline bool scan_cell_usable(const ScanCell& c) {
    return c.ok && std::isfinite(c.value) && std::isfinite(c.error) && c.error > 0.0 &&
           c.error < std::fabs(c.value);
}

// Zero-slope (weighted-mean) consistency check plus a sloped linear fit for
// the same series.
inline FlatnessCheck flatness_check(const std::vector<double>& x,
                                    const std::vector<double>& y,
                                    const std::vector<double>& sigma) {
    FlatnessCheck out;
    if (x.size() < 2) return out;
    double sw = 0.0, swy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = 1.0 / (sigma[i] * sigma[i]);
        sw += w;
        swy += w * y[i];
    }
    out.mean.value = swy / sw;
    out.mean.error = std::sqrt(1.0 / sw);
    double chi2 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = (y[i] - out.mean.value) / sigma[i];
        chi2 += r * r;
    }
    out.chi2_reduced = chi2 / static_cast<double>(y.size() - 1);
    out.line = weighted_linear_fit(x, y, sigma);
    out.ok = true;
    return out;
}

struct RelaxometryRun {
    TemperatureScan scan;
    std::vector<RelaxometryTrace> raw_traces;     // per temperature
    std::vector<DecaySeries> decay_pi;            // empty series when absent
    std::vector<DecaySeries> decay_all_optical;
    std::vector<DecaySeries> decay_recharge;
    bool a1_pi_ok = false;
    bool a1_ao_ok = false;
    FitResult a1_pi;
    FitResult a1_all_optical;
    ValueWithError a1_mean;  // mean of the two methods, conservative error
    FlatnessCheck flat_inv_tr1;
    FlatnessCheck flat_inv_tr2;
    std::vector<ValueWithError> ratio_stats;  // per temperature, when calibrated
    bool ratio_ok = false;
    FlatnessCheck ratio_flatness;
};

inline RelaxometryRun run_relaxometry_pipeline(const PulseSequence& seq,
                                               const PhysicsConfig& physics,
                                               const DetectorConfig& detector,
                                               const std::vector<double>& temps_k,
                                               std::uint64_t seed,
                                               const MappingCalibration* calibration = nullptr) {
    RelaxometryRun run;
    run.scan = temperature_scan(seq, physics, detector, temps_k, seed, &run.raw_traces);

    for (std::size_t ti = 0; ti < temps_k.size(); ++ti) {
        const RelaxometryTrace corrected = correct_trace(run.raw_traces[ti], detector);
        run.decay_pi.push_back(corrected.has_with_pi ? pi_pulse_decay(corrected)
                                                     : DecaySeries{});
        run.decay_all_optical.push_back(all_optical_decay(corrected));
        run.decay_recharge.push_back(recharge_decay(corrected));
    }

    try {
        run.a1_pi = fit_scan_a1(run.scan, true, physics);
        run.a1_pi_ok = true;
    } catch (const Error&) {
    }
    try {
        run.a1_all_optical = fit_scan_a1(run.scan, false, physics);
        run.a1_ao_ok = true;
    } catch (const Error&) {
    }
    if (run.a1_pi_ok && run.a1_ao_ok) {
        run.a1_mean.value = 0.5 * (run.a1_pi.params[0] + run.a1_all_optical.params[0]);
        // the two estimates share their raw counts; take the larger error
        run.a1_mean.error = std::max(run.a1_pi.std_errors[0], run.a1_all_optical.std_errors[0]);
    } else if (run.a1_pi_ok) {
        run.a1_mean = {run.a1_pi.params[0], run.a1_pi.std_errors[0]};
    } else if (run.a1_ao_ok) {
        run.a1_mean = {run.a1_all_optical.params[0], run.a1_all_optical.std_errors[0]};
    }

    std::vector<double> t1s, r1, s1, t2s, r2, s2;
    for (const auto& row : run.scan.rows) {
        if (scan_cell_usable(row.inv_t_r1)) {
            t1s.push_back(row.temperature_k);
            r1.push_back(row.inv_t_r1.value);
            s1.push_back(row.inv_t_r1.error);
        }
        if (scan_cell_usable(row.inv_t_r2)) {
            t2s.push_back(row.temperature_k);
            r2.push_back(row.inv_t_r2.value);
            s2.push_back(row.inv_t_r2.error);
        }
    }
    run.flat_inv_tr1 = flatness_check(t1s, r1, s1);
    run.flat_inv_tr2 = flatness_check(t2s, r2, s2);

    if (calibration) {
        std::vector<double> ts, ys, ss;
        for (std::size_t ti = 0; ti < temps_k.size(); ++ti) {
            const ChargeRatioMapping& m = calibration->at_temperature(temps_k[ti]);
            const RelaxometryTrace corrected = correct_trace(run.raw_traces[ti], detector);
            const ValueWithError stat = ratio_increase_statistic(corrected, m);
            run.ratio_stats.push_back(stat);
            ts.push_back(temps_k[ti]);
            ys.push_back(stat.value);
            ss.push_back(stat.error > 0 ? stat.error : 1.0);
        }
        run.ratio_flatness = flatness_check(ts, ys, ss);
        run.ratio_ok = true;
    }
    return run;
}

}  // namespace nvrelax
