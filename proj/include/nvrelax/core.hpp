#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "nvrelax/errors.hpp"

// Shared physical quantities and dataset containers.

namespace nvrelax {

// CODATA value, eV/K. Configurable through PhysicsConfig; this is the default.
inline constexpr double kBoltzmannEvPerK = 8.617333262e-5;

struct ValueWithError {
    double value = 0.0;
    double error = 0.0;
};

// Phonon model for the longitudinal relaxation rate,
//   1/T1(T) = a1 + a2 / (exp(delta/kT) - 1) + a3 * T^5.
// a1 is sample-dependent; a2, a3 and the phonon energy delta are universal.
struct TemperatureModel {
    double a1 = 657.0;      // 1/s
    double a2 = 2.1e3;      // 1/s
    double a3 = 2.2e-11;    // 1/(s K^5)
    double delta = 0.073;   // eV

    void validate() const {
        if (a1 < 0.0 || a2 < 0.0 || a3 < 0.0)
            throw DomainError("TemperatureModel: rates a1, a2, a3 must be >= 0");
        if (!(delta > 0.0))
            throw DomainError("TemperatureModel: phonon energy delta must be > 0");
    }
};

// Relaxation rate 1/T1 at the given temperature (strictly increasing in T
// whenever a2 or a3 is positive).
inline double t1_rate(const TemperatureModel& model, double temperature_k,
                      double boltzmann_ev_per_k = kBoltzmannEvPerK) {
    if (!(temperature_k > 0.0))
        throw DomainError("t1_rate: temperature must be > 0 K");
    if (!(boltzmann_ev_per_k > 0.0))
        throw DomainError("t1_rate: Boltzmann constant must be > 0");
    const double orbach =
        model.a2 / std::expm1(model.delta / (boltzmann_ev_per_k * temperature_k));
    const double raman = model.a3 * std::pow(temperature_k, 5);
    return model.a1 + orbach + raman;
}

// ODMR thermometry: temperature from a measured zero-field splitting.
//   T = t_ref + (d_measured - d_ref) / slope
// The error combines the resonance-fit error and the slope uncertainty in
// first-order quadrature.
inline ValueWithError temperature_from_zfs(double d_measured_hz, double d_err_hz,
                                           double d_ref_hz, double t_ref_k,
                                           double slope_hz_per_k,
                                           double slope_err_hz_per_k = 0.0) {
    if (slope_hz_per_k == 0.0)
        throw DomainError("temperature_from_zfs: slope must be nonzero");
    const double shift = d_measured_hz - d_ref_hz;
    const double t = t_ref_k + shift / slope_hz_per_k;
    const double from_fit = d_err_hz / slope_hz_per_k;
    const double from_slope = shift * slope_err_hz_per_k / (slope_hz_per_k * slope_hz_per_k);
    const double err = std::sqrt(from_fit * from_fit + from_slope * from_slope);
    return {t, err};
}

// Inverse map used by the simulator: D(T) = d_ref + slope * (T - t_ref).
inline double zfs_from_temperature(double temperature_k, double d_ref_hz,
                                   double t_ref_k, double slope_hz_per_k) {
    return d_ref_hz + slope_hz_per_k * (temperature_k - t_ref_k);
}

// Wavelength-sampled fluorescence intensity with acquisition metadata.
// Intensities are exposure-corrected count rates per wavelength bin,
// width-normalized to a spectral density (counts/s/nm) so that trapezoidal
// integration on the native, possibly non-uniform grid gives physical areas.
// Spectra must be background-subtracted.
struct Spectrum {
    std::vector<double> wavelengths_nm;
    std::vector<double> intensities;   // counts/s/nm per bin
    double laser_power_w = 0.0;
    double temperature_k = 0.0;
    double exposure_s = 1.0;

    static constexpr double kMinWavelengthNm = 550.0;
    static constexpr double kMaxWavelengthNm = 775.0;

    void validate() const {
        if (wavelengths_nm.size() != intensities.size())
            throw ShapeError("Spectrum: wavelength and intensity arrays differ in length");
        if (wavelengths_nm.size() < 2)
            throw ShapeError("Spectrum: need at least two samples");
        if (!(exposure_s > 0.0))
            throw DomainError("Spectrum: exposure must be > 0 s");
        for (std::size_t i = 0; i < wavelengths_nm.size(); ++i) {
            const double w = wavelengths_nm[i];
            if (!std::isfinite(w) || w < kMinWavelengthNm - 1e-9 || w > kMaxWavelengthNm + 1e-9)
                throw DomainError("Spectrum: wavelength outside [550, 775] nm at index " +
                                  std::to_string(i));
            if (i > 0 && !(w > wavelengths_nm[i - 1]))
                throw DomainError("Spectrum: wavelengths must be strictly ascending at index " +
                                  std::to_string(i));
            if (!std::isfinite(intensities[i]))
                throw DomainError("Spectrum: non-finite intensity at index " + std::to_string(i));
        }
    }

    std::size_t size() const { return wavelengths_nm.size(); }
};

// Trapezoidal integral on the native (possibly non-uniform) wavelength grid.
inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ShapeError("trapezoid: size mismatch");
    double sum = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i)
        sum += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return sum;
}

// Parameter estimates with standard errors and covariance from weighted
// least squares.
struct FitResult {
    std::vector<double> params;
    std::vector<double> std_errors;
    std::vector<std::vector<double>> covariance;
    double chi_squared = 0.0;
    std::size_t dof = 1;
    bool converged = true;
    int iterations = 0;
    std::vector<std::string> warnings;

    void check_invariants() const {
        if (std_errors.size() != params.size() || covariance.size() != params.size())
            throw ShapeError("FitResult: inconsistent sizes");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (covariance[i].size() != params.size())
                throw ShapeError("FitResult: covariance is not square");
            if (covariance[i][i] < 0.0)
                throw DomainError("FitResult: negative variance on diagonal");
        }
        if (dof < 1) throw DomainError("FitResult: dof must be >= 1");
    }
};

}  // namespace nvrelax
