#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nvrelax/config.hpp"
#include "nvrelax/core.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/photophysics.hpp"
#include "nvrelax/rng.hpp"
#include "nvrelax/spectra.hpp"

// Synthetic spectrometer datasets: NV-/NV0 component lineshapes with
// temperature-dependent ZPLs, combined according to the charge model and
// sampled with Poisson shot noise.

namespace nvrelax {

struct SynthParams {
    int grid_points = 901;
    double grid_chirp = 0.06;        // mild non-uniformity of the wavelength grid
    double rate_per_w = 2.5e11;      // total spectral count rate per W of laser power
    double target_counts = 2.0e7;    // expected counts per map spectrum (sets exposure)
    // the kappa series is recorded with far shorter exposures, matching the
    // statistical weight of a routine calibration run
    double cal_target_counts = 2.0e5;
    double exposure_min_s = 1e-3;
    double exposure_max_s = 10.0;
    double zpl_center_slope = 0.010;       // nm/K, both components
    double zpl_fwhm_slope_minus = 0.012;   // nm/K
    double zpl_fwhm_slope_zero = 0.010;    // nm/K

    void validate() const {
        if (grid_points < 16) throw DomainError("SynthParams: grid_points too small");
        if (!(rate_per_w > 0.0) || !(target_counts > 0.0) || !(cal_target_counts > 0.0))
            throw DomainError("SynthParams: rates and counts must be > 0");
        if (!(exposure_min_s > 0.0) || !(exposure_max_s >= exposure_min_s))
            throw DomainError("SynthParams: exposure limits out of order");
    }
};

inline SynthParams parse_synth_params(const ConfigFile& cfg) {
    SynthParams s;
    s.grid_points = static_cast<int>(cfg.get_long("synth", "grid_points", s.grid_points));
    s.grid_chirp = cfg.get_double("synth", "grid_chirp", s.grid_chirp);
    s.rate_per_w = cfg.get_double("synth", "rate_per_w_cps", s.rate_per_w);
    s.target_counts = cfg.get_double("synth", "target_counts", s.target_counts);
    s.cal_target_counts = cfg.get_double("synth", "cal_target_counts", s.cal_target_counts);
    s.exposure_min_s = cfg.get_double("synth", "exposure_min_s", s.exposure_min_s);
    s.exposure_max_s = cfg.get_double("synth", "exposure_max_s", s.exposure_max_s);
    s.zpl_center_slope =
        cfg.get_double("synth", "zpl_center_slope_nm_per_k", s.zpl_center_slope);
    s.zpl_fwhm_slope_minus =
        cfg.get_double("synth", "zpl_fwhm_slope_minus_nm_per_k", s.zpl_fwhm_slope_minus);
    s.zpl_fwhm_slope_zero =
        cfg.get_double("synth", "zpl_fwhm_slope_zero_nm_per_k", s.zpl_fwhm_slope_zero);
    s.validate();
    return s;
}

namespace synth_detail {

inline double lorentzian_density(double x, double center, double fwhm) {
    const double u = 2.0 * (x - center) / fwhm;
    return (2.0 / (M_PI * fwhm)) / (1.0 + u * u);
}

inline double gaussian_density(double x, double center, double sigma) {
    const double u = (x - center) / sigma;
    return std::exp(-0.5 * u * u) / (sigma * std::sqrt(2.0 * M_PI));
}

// trapezoid quadrature weights for the native grid
inline std::vector<double> bin_weights(const std::vector<double>& grid) {
    const std::size_t n = grid.size();
    std::vector<double> w(n, 0.0);
    w[0] = 0.5 * (grid[1] - grid[0]);
    for (std::size_t i = 1; i + 1 < n; ++i) w[i] = 0.5 * (grid[i + 1] - grid[i - 1]);
    w[n - 1] = 0.5 * (grid[n - 1] - grid[n - 2]);
    return w;
}

}  // namespace synth_detail

// Slightly chirped spectrometer grid covering [550, 775] nm.
inline std::vector<double> make_wavelength_grid(const SynthParams& params) {
    std::vector<double> grid(params.grid_points);
    const double n1 = static_cast<double>(params.grid_points - 1);
    for (int i = 0; i < params.grid_points; ++i) {
        const double t = static_cast<double>(i) / n1;
        grid[i] = 550.0 + 225.0 * (t + params.grid_chirp * t * (1.0 - t));
    }
    return grid;
}

// Unit-area component lineshape on the grid: one ZPL Lorentzian whose center
// and width drift with temperature, plus a fixed phonon sideband.
inline std::vector<double> true_lineshape(SpectralComponent component, double temperature_k,
                                          const std::vector<double>& grid,
                                          const SynthParams& params) {
    const double dt = temperature_k - 294.0;
    std::vector<double> v(grid.size(), 0.0);
    if (component == SpectralComponent::nv_minus) {
        const double zc = kZplCenterNvMinusNm + params.zpl_center_slope * dt;
        const double zw = 1.8 + params.zpl_fwhm_slope_minus * dt;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double x = grid[i];
            v[i] = 0.04 * synth_detail::lorentzian_density(x, zc, zw) +
                   0.30 * synth_detail::gaussian_density(x, 664.0, 11.0) +
                   0.46 * synth_detail::gaussian_density(x, 692.0, 17.0) +
                   0.20 * synth_detail::gaussian_density(x, 728.0, 24.0);
        }
    } else {
        const double zc = kZplCenterNvZeroNm + params.zpl_center_slope * dt;
        const double zw = 1.4 + params.zpl_fwhm_slope_zero * dt;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double x = grid[i];
            v[i] = 0.05 * synth_detail::lorentzian_density(x, zc, zw) +
                   0.32 * synth_detail::gaussian_density(x, 599.0, 9.0) +
                   0.43 * synth_detail::gaussian_density(x, 622.0, 15.0) +
                   0.20 * synth_detail::gaussian_density(x, 655.0, 22.0);
        }
    }
    const double area = trapezoid(grid, v);
    for (double& x : v) x /= area;
    return v;
}

// Spectral contribution c_minus that makes the decomposition fraction come
// out as f through the correction factor: c = kappa f / (1 + (kappa - 1) f).
inline double c_minus_for_fraction(double fraction, double kappa) {
    return kappa * fraction / (1.0 + (kappa - 1.0) * fraction);
}

// Emit one spectrum with the given NV- spectral contribution. Expected bin
// counts follow the component lineshapes; Poisson sampling is applied per bin
// when noise is enabled.
inline Spectrum simulate_spectrum(const std::vector<double>& grid, double power_w,
                                  double temperature_k, double c_minus,
                                  const SynthParams& params, RngEngine& rng,
                                  bool noise = true) {
    if (!(power_w > 0.0)) throw DomainError("simulate_spectrum: power must be > 0");
    if (!(c_minus >= 0.0 && c_minus <= 1.0))
        throw DomainError("simulate_spectrum: c_minus must be in [0, 1]");

    const double total_rate = params.rate_per_w * power_w;
    double exposure = params.target_counts / total_rate;
    exposure = std::min(std::max(exposure, params.exposure_min_s), params.exposure_max_s);
    const double n_total = total_rate * exposure;

    const std::vector<double> shape_minus =
        true_lineshape(SpectralComponent::nv_minus, temperature_k, grid, params);
    const std::vector<double> shape_zero =
        true_lineshape(SpectralComponent::nv_zero, temperature_k, grid, params);
    const std::vector<double> w = synth_detail::bin_weights(grid);

    Spectrum s;
    s.wavelengths_nm = grid;
    s.intensities.resize(grid.size());
    s.laser_power_w = power_w;
    s.temperature_k = temperature_k;
    s.exposure_s = exposure;
    // Poisson statistics act on the raw bin counts; the stored intensity is
    // exposure- and bin-width-normalized (counts/s/nm), the convention the
    // trapezoidal integration rule expects on a non-uniform grid.
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double mu =
            n_total * (c_minus * shape_minus[i] + (1.0 - c_minus) * shape_zero[i]) * w[i];
        const double counts = noise ? static_cast<double>(poisson_draw(mu, rng)) : mu;
        s.intensities[i] = counts / (exposure * w[i]);
    }
    s.validate();
    return s;
}

// Fraction-map spectrum: the NV- fraction is the charge steady state at this
// power, translated to spectral contributions through kappa.
inline Spectrum simulate_map_spectrum(const std::vector<double>& grid, double power_w,
                                      double temperature_k, const PhysicsConfig& physics,
                                      const SynthParams& params, RngEngine& rng,
                                      bool noise = true) {
    const double f = steady_state_fraction(power_w, physics.emission);
    const double c = c_minus_for_fraction(f, physics.kappa_lambda);
    return simulate_spectrum(grid, power_w, temperature_k, c, params, rng, noise);
}

// Kappa-calibration spectrum: in the sub-saturation calibration regime both
// component intensities are proportional to the laser power, so the slope
// quotient reproduces kappa exactly; the component odds are ratio-locked to
// kappa itself (fraction one half).
inline Spectrum simulate_calibration_spectrum(const std::vector<double>& grid,
                                              double power_w, double temperature_k,
                                              const PhysicsConfig& physics,
                                              const SynthParams& params, RngEngine& rng,
                                              bool noise = true) {
    const double c = physics.kappa_lambda / (1.0 + physics.kappa_lambda);
    SynthParams cal = params;
    cal.target_counts = params.cal_target_counts;
    return simulate_spectrum(grid, power_w, temperature_k, c, cal, rng, noise);
}

}  // namespace nvrelax
