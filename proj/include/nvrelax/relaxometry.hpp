#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nvrelax/config.hpp"
#include "nvrelax/core.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/fitting.hpp"
#include "nvrelax/photophysics.hpp"
#include "nvrelax/trace.hpp"

// Trace-evaluation recipes and the temperature-scan orchestration: traces in,
// T1, recharge times, A1 and charge-ratio statistics out.

namespace nvrelax {

struct DecaySeries {
    std::vector<double> tau_s;
    std::vector<double> y;
    std::vector<double> sigma;  // standard error of y
};

namespace detail {

inline double sem(const TraceCell& cell, double samples) {
    return cell.std_dev / std::sqrt(samples);
}

}  // namespace detail

// Spin-polarization observable: difference of the NV--channel signal-window
// counts without and with the pi pulse, per tau. This is the subtraction
// evaluation; it uses only the signal windows.
inline DecaySeries pi_pulse_decay(const RelaxometryTrace& trace) {
    trace.validate();
    if (!trace.has_with_pi)
        throw SequenceError("pi_pulse_decay: trace has no with-pi half");
    DecaySeries out;
    out.tau_s = trace.tau_s;
    const double n = trace.samples();
    for (std::size_t i = 0; i < trace.tau_s.size(); ++i) {
        const TraceCell& wo = trace.at(i, Half::without_pi, Window::signal, Channel::minus);
        const TraceCell& wi = trace.at(i, Half::with_pi, Window::signal, Channel::minus);
        out.y.push_back(wo.mean - wi.mean);
        out.sigma.push_back(std::sqrt(detail::sem(wo, n) * detail::sem(wo, n) +
                                      detail::sem(wi, n) * detail::sem(wi, n)));
    }
    return out;
}

// All-optical observable: NV--channel signal counts divided by normalization
// counts in the without-pi half.
inline DecaySeries all_optical_decay(const RelaxometryTrace& trace) {
    trace.validate();
    DecaySeries out;
    out.tau_s = trace.tau_s;
    const double n = trace.samples();
    for (std::size_t i = 0; i < trace.tau_s.size(); ++i) {
        const TraceCell& sig = trace.at(i, Half::without_pi, Window::signal, Channel::minus);
        const TraceCell& nrm =
            trace.at(i, Half::without_pi, Window::normalization, Channel::minus);
        if (!(nrm.mean > 0.0))
            throw DegenerateInputError("all_optical_decay: zero normalization counts");
        const double y = sig.mean / nrm.mean;
        const double rs = detail::sem(sig, n) / std::max(sig.mean, 1e-300);
        const double rn = detail::sem(nrm, n) / nrm.mean;
        out.y.push_back(y);
        out.sigma.push_back(std::fabs(y) * std::sqrt(rs * rs + rn * rn));
    }
    return out;
}

// Recharge observable: NV0-channel signal/normalization ratio in the
// without-pi half; decays biexponentially while NV0 recharges in the dark.
inline DecaySeries recharge_decay(const RelaxometryTrace& trace) {
    trace.validate();
    DecaySeries out;
    out.tau_s = trace.tau_s;
    const double n = trace.samples();
    for (std::size_t i = 0; i < trace.tau_s.size(); ++i) {
        const TraceCell& sig = trace.at(i, Half::without_pi, Window::signal, Channel::zero);
        const TraceCell& nrm =
            trace.at(i, Half::without_pi, Window::normalization, Channel::zero);
        if (!(nrm.mean > 0.0))
            throw DegenerateInputError("recharge_decay: zero normalization counts");
        const double y = sig.mean / nrm.mean;
        const double rs = detail::sem(sig, n) / std::max(sig.mean, 1e-300);
        const double rn = detail::sem(nrm, n) / nrm.mean;
        out.y.push_back(y);
        out.sigma.push_back(std::fabs(y) * std::sqrt(rs * rs + rn * rn));
    }
    return out;
}

namespace detail {

// Noise-free traces carry zero standard deviations; least-squares weights
// must stay positive, so substitute unit weights in that case.
inline std::vector<double> usable_sigmas(const DecaySeries& series) {
    bool ok = true;
    for (double s : series.sigma)
        if (!(s > 0.0)) ok = false;
    if (ok) return series.sigma;
    return std::vector<double>(series.sigma.size(), 1.0);
}

}  // namespace detail

// Monotone-validated mapping from SPCM count-rate ratios to charge ratios,
// r = a x^n + c, with its validity range.
struct ChargeRatioMapping {
    double a = 1.0;
    double n = 1.0;
    double c = 0.0;
    double ratio_min = 0.0;  // validity range of count ratios
    double ratio_max = 0.0;
    FitResult fit;           // params = {a, n, c}

    void check_range(double count_ratio) const {
        if (count_ratio < ratio_min - 1e-12 || count_ratio > ratio_max + 1e-12)
            throw CalibrationRangeError(
                "ChargeRatioMapping: count ratio " + std::to_string(count_ratio) +
                " outside calibrated range [" + std::to_string(ratio_min) + ", " +
                std::to_string(ratio_max) + "]");
    }

    double map(double count_ratio) const {
        check_range(count_ratio);
        return a * std::pow(count_ratio, n) + c;
    }

    // Propagates the count-ratio error and the mapping-fit covariance in
    // quadrature.
    ValueWithError map_with_error(double count_ratio, double count_ratio_err) const {
        check_range(count_ratio);
        const double xn = std::pow(count_ratio, n);
        const double value = a * xn + c;
        const double dydx = a * n * std::pow(count_ratio, n - 1.0);
        // gradient wrt (a, n, c)
        const double g[3] = {xn, a * xn * std::log(count_ratio), 1.0};
        double var = dydx * count_ratio_err * dydx * count_ratio_err;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) var += g[i] * fit.covariance[i][j] * g[j];
        return {value, std::sqrt(std::max(0.0, var))};
    }
};

// Fit the count-ratio -> charge-ratio mapping on paired calibration data.
// Both error sources are folded into the weights (effective-variance pass),
// and the fitted mapping must be strictly monotonic over the data range.
inline ChargeRatioMapping calibrate_charge_ratio_mapping(
    const std::vector<ValueWithError>& charge_ratios,
    const std::vector<ValueWithError>& count_ratios) {
    if (charge_ratios.size() != count_ratios.size())
        throw ShapeError("calibrate_charge_ratio_mapping: unpaired inputs");
    if (charge_ratios.size() < 4)
        throw InsufficientDataError("calibrate_charge_ratio_mapping: need >= 4 pairs");

    std::vector<double> x, y, sy;
    for (std::size_t i = 0; i < charge_ratios.size(); ++i) {
        if (!(count_ratios[i].value > 0.0))
            throw DomainError("calibrate_charge_ratio_mapping: count ratios must be > 0");
        x.push_back(count_ratios[i].value);
        y.push_back(charge_ratios[i].value);
        sy.push_back(charge_ratios[i].error);
    }

    bool have_sigma = true;
    for (double s : sy)
        if (!(s > 0.0)) have_sigma = false;
    std::vector<double> sigma = have_sigma ? sy : std::vector<double>(y.size(), 1.0);

    FitResult fr = fit_power_law(x, y, sigma, have_sigma);
    // second pass: fold the count-ratio errors through the fitted slope
    if (have_sigma) {
        std::vector<double> eff(sigma.size());
        bool changed = false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double dydx = fr.params[0] * fr.params[1] * std::pow(x[i], fr.params[1] - 1.0);
            const double sx = count_ratios[i].error;
            eff[i] = std::sqrt(sy[i] * sy[i] + dydx * sx * dydx * sx);
            if (eff[i] > sy[i] * (1.0 + 1e-12)) changed = true;
        }
        if (changed) fr = fit_power_law(x, y, eff, true);
    }

    ChargeRatioMapping m;
    m.a = fr.params[0];
    m.n = fr.params[1];
    m.c = fr.params[2];
    m.ratio_min = *std::min_element(x.begin(), x.end());
    m.ratio_max = *std::max_element(x.begin(), x.end());
    m.fit = std::move(fr);
    if (!(m.a > 0.0))
        throw CalibrationError(
            "calibrate_charge_ratio_mapping: fitted mapping is not increasing (a <= 0)");
    return m;
}

// Charge-ratio increase over the sweep: the count ratio at the last tau
// mapped to a charge ratio, divided by the mapped ratio at the first tau
// (without-pi half, signal window). Errors from the count statistics and the
// mapping fit are combined in quadrature.
inline ValueWithError ratio_increase_statistic(const RelaxometryTrace& trace,
                                               const ChargeRatioMapping& mapping) {
    trace.validate();
    const double n = trace.samples();
    auto count_ratio = [&](std::size_t ti) -> ValueWithError {
        const TraceCell& cm = trace.at(ti, Half::without_pi, Window::signal, Channel::minus);
        const TraceCell& cz = trace.at(ti, Half::without_pi, Window::signal, Channel::zero);
        if (!(cz.mean > 0.0))
            throw DegenerateInputError("ratio_increase_statistic: zero NV0 counts");
        const double r = cm.mean / cz.mean;
        const double rm = detail::sem(cm, n) / std::max(cm.mean, 1e-300);
        const double rz = detail::sem(cz, n) / cz.mean;
        return {r, r * std::sqrt(rm * rm + rz * rz)};
    };
    const ValueWithError x_first = count_ratio(0);
    const ValueWithError x_last = count_ratio(trace.tau_s.size() - 1);
    const ValueWithError r_first = mapping.map_with_error(x_first.value, x_first.error);
    const ValueWithError r_last = mapping.map_with_error(x_last.value, x_last.error);
    if (!(r_first.value > 0.0))
        throw DomainError("ratio_increase_statistic: non-positive mapped ratio at first tau");
    const double stat = r_last.value / r_first.value;
    const double rel1 = r_last.error / r_last.value;
    const double rel0 = r_first.error / r_first.value;
    return {stat, std::fabs(stat) * std::sqrt(rel1 * rel1 + rel0 * rel0)};
}

// One evaluated quantity of a temperature-scan row; failed fits are flagged
// rather than aborting the scan.
struct ScanCell {
    bool ok = false;
    double value = 0.0;  // 1/T in 1/s
    double error = 0.0;
    std::string note;
};

struct ScanRow {
    double temperature_k = 0.0;
    ScanCell inv_t1_pi;
    ScanCell inv_t1_all_optical;
    ScanCell inv_t_r1;
    ScanCell inv_t_r2;
    FitResult monoexp_pi;
    FitResult monoexp_all_optical;
    FitResult biexp_recharge;
};

struct TemperatureScan {
    std::vector<ScanRow> rows;
};

namespace detail {

// 1/T with first-order error from the fitted time constant.
inline ScanCell invert_time_constant(const FitResult& fit, std::size_t index) {
    ScanCell cell;
    const double t = fit.params[index];
    if (!(t > 0.0)) {
        cell.note = "non-positive time constant";
        return cell;
    }
    cell.ok = true;
    cell.value = 1.0 / t;
    cell.error = fit.std_errors[index] / (t * t);
    return cell;
}

}  // namespace detail

// Simulate, correct, evaluate and fit one trace per temperature. Per-T seeds
// are derived from the temperature value itself, so permuting the input
// temperatures permutes rows only.
inline TemperatureScan temperature_scan(const PulseSequence& seq,
                                        const PhysicsConfig& physics,
                                        const DetectorConfig& detector,
                                        const std::vector<double>& temps_k,
                                        std::uint64_t seed,
                                        std::vector<RelaxometryTrace>* traces_out = nullptr) {
    if (temps_k.size() < 2)
        throw InsufficientDataError("temperature_scan: need >= 2 temperatures");
    for (double t : temps_k)
        if (t < 250.0 || t > 400.0)
            throw DomainError("temperature_scan: temperature outside the [250, 400] K range");

    const SequenceModel model = make_sequence_model(physics, detector);
    TemperatureScan scan;
    for (double temp : temps_k) {
        const std::uint64_t t_seed =
            derive_seed(seed, std::bit_cast<std::uint64_t>(temp));
        RelaxometryTrace raw = run_sequence(seq, model, temp, t_seed);
        RelaxometryTrace trace = correct_trace(raw, detector);
        if (traces_out) traces_out->push_back(raw);

        ScanRow row;
        row.temperature_k = temp;

        if (trace.has_with_pi) {
            try {
                DecaySeries d = pi_pulse_decay(trace);
                row.monoexp_pi = fit_monoexp(d.tau_s, d.y, detail::usable_sigmas(d));
                row.inv_t1_pi = detail::invert_time_constant(row.monoexp_pi, 1);
            } catch (const Error& e) {
                row.inv_t1_pi.note = e.what();
            }
        } else {
            row.inv_t1_pi.note = "no pi half in sequence";
        }

        try {
            DecaySeries d = all_optical_decay(trace);
            row.monoexp_all_optical = fit_monoexp(d.tau_s, d.y, detail::usable_sigmas(d));
            row.inv_t1_all_optical = detail::invert_time_constant(row.monoexp_all_optical, 1);
        } catch (const Error& e) {
            row.inv_t1_all_optical.note = e.what();
        }

        try {
            DecaySeries d = recharge_decay(trace);
            row.biexp_recharge = fit_biexp(d.tau_s, d.y, detail::usable_sigmas(d));
            row.inv_t_r1 = detail::invert_time_constant(row.biexp_recharge, 1);
            row.inv_t_r2 = detail::invert_time_constant(row.biexp_recharge, 3);
            for (const auto& w : row.biexp_recharge.warnings) {
                row.inv_t_r1.note = w;
                row.inv_t_r2.note = w;
            }
        } catch (const Error& e) {
            row.inv_t_r1.note = e.what();
            row.inv_t_r2.note = e.what();
        }

        scan.rows.push_back(std::move(row));
    }
    return scan;
}

// Weighted fit of the phonon model across the scan (a1 free; a2, a3, delta
// fixed), applied to one of the 1/T1 columns.
inline FitResult fit_scan_a1(const TemperatureScan& scan, bool use_pi_column,
                             const PhysicsConfig& physics) {
    std::vector<double> t, y, s;
    for (const auto& row : scan.rows) {
        const ScanCell& cell = use_pi_column ? row.inv_t1_pi : row.inv_t1_all_optical;
        if (!cell.ok || !std::isfinite(cell.value) || !std::isfinite(cell.error)) continue;
        t.push_back(row.temperature_k);
        y.push_back(cell.value);
        s.push_back(cell.error > 0.0 ? cell.error : 1.0);
    }
    if (t.size() < 2)
        throw InsufficientDataError("fit_scan_a1: fewer than 2 usable temperatures");
    return fit_t1_temperature_model(t, y, s, physics.t1_model, physics.boltzmann_k);
}

}  // namespace nvrelax
