#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "nvrelax/core.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/fitting.hpp"

// NV-/NV0 basis construction, spectral decomposition, kappa estimation,
// NV- fractions and ZPL lineshape fits.

namespace nvrelax {

enum class SpectralComponent { nv_minus, nv_zero };

inline constexpr double kZplCenterNvMinusNm = 639.0;
inline constexpr double kZplCenterNvZeroNm = 575.0;

// ZPL feature windows used when optimizing the subtraction weights.
inline constexpr double kZplWindowNvMinusNm[2] = {631.0, 647.0};
inline constexpr double kZplWindowNvZeroNm[2] = {567.0, 583.0};

namespace detail {

inline void require_same_grid(const std::vector<double>& a, const std::vector<double>& b,
                              const char* who) {
    if (a.size() != b.size()) throw ShapeError(std::string(who) + ": wavelength grids differ");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::fabs(a[i] - b[i]) > 1e-9)
            throw ShapeError(std::string(who) + ": wavelength grids differ at index " +
                             std::to_string(i));
}

// Clip negatives to zero, then normalize to unit trapezoidal area.
inline std::vector<double> clip_and_normalize(const std::vector<double>& grid,
                                              std::vector<double> v, const char* who) {
    double peak = 0.0;
    for (double& x : v) {
        peak = std::max(peak, std::fabs(x));
        if (x < 0.0) x = 0.0;
    }
    const double area = trapezoid(grid, v);
    if (!(area > 1e-12 * std::max(peak, 1e-300)))
        throw DegenerateInputError(std::string(who) +
                                   ": basis is non-positive everywhere after subtraction");
    for (double& x : v) x /= area;
    return v;
}

inline std::vector<double> normalized_intensities(const Spectrum& s, const char* who) {
    const double area = trapezoid(s.wavelengths_nm, s.intensities);
    if (!(area > 0.0))
        throw DegenerateInputError(std::string(who) + ": spectrum has non-positive area");
    std::vector<double> v = s.intensities;
    for (double& x : v) x /= area;
    return v;
}

// Sum of squared deviations from the best straight line over a wavelength
// window; measures the sharp (ZPL-like) content while ignoring the smooth
// sideband background.
inline double zpl_feature_residual(const std::vector<double>& grid,
                                   const std::vector<double>& values, double lo_nm,
                                   double hi_nm) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid[i] >= lo_nm && grid[i] <= hi_nm) {
            x.push_back(grid[i]);
            y.push_back(values[i]);
        }
    if (x.size() < 3) throw InsufficientDataError("zpl_feature_residual: window too narrow");
    FitResult line = ols_linear_fit(x, y);
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (line.params[0] * x[i] + line.params[1]);
        ss += r * r;
    }
    return ss;
}

}  // namespace detail

// Area-normalized NV-/NV0 basis functions with the subtraction weights that
// produced them.
struct BasisSet {
    std::vector<double> wavelength_grid;
    std::vector<double> basis_minus;  // unit trapezoidal area
    std::vector<double> basis_zero;
    double delta0 = 0.0;
    double delta_minus = 0.0;

    void validate() const {
        detail::require_same_grid(wavelength_grid, wavelength_grid, "BasisSet");
        if (basis_minus.size() != wavelength_grid.size() ||
            basis_zero.size() != wavelength_grid.size())
            throw ShapeError("BasisSet: size mismatch");
        for (double v : basis_minus)
            if (v < 0.0) throw DomainError("BasisSet: negative basis_minus sample");
        for (double v : basis_zero)
            if (v < 0.0) throw DomainError("BasisSet: negative basis_zero sample");
        if (std::fabs(trapezoid(wavelength_grid, basis_minus) - 1.0) > 1e-9 ||
            std::fabs(trapezoid(wavelength_grid, basis_zero) - 1.0) > 1e-9)
            throw DomainError("BasisSet: basis functions must integrate to 1");
    }
};

// Construct the basis pair from an NV0-dominated reference (high power) and
// an NV--dominated reference (low power):
//   basis_minus ~ norm(i_minus_pre) - delta0 * norm(i0_pre)
//   basis_zero  ~ norm(i0_pre) - delta_minus * basis_minus
// Negative samples are clipped to zero before area normalization.
inline BasisSet build_basis(const Spectrum& i0_pre, const Spectrum& i_minus_pre,
                            double delta0, double delta_minus) {
    i0_pre.validate();
    i_minus_pre.validate();
    detail::require_same_grid(i0_pre.wavelengths_nm, i_minus_pre.wavelengths_nm, "build_basis");
    if (!(delta0 >= 0.0 && delta0 < 1.0) || !(delta_minus >= 0.0 && delta_minus < 1.0))
        throw DomainError("build_basis: deltas must be in [0, 1)");

    const auto& grid = i0_pre.wavelengths_nm;
    const std::vector<double> n0 = detail::normalized_intensities(i0_pre, "build_basis");
    const std::vector<double> nm = detail::normalized_intensities(i_minus_pre, "build_basis");

    std::vector<double> raw_minus(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) raw_minus[i] = nm[i] - delta0 * n0[i];
    BasisSet basis;
    basis.wavelength_grid = grid;
    basis.basis_minus = detail::clip_and_normalize(grid, raw_minus, "build_basis[minus]");

    std::vector<double> raw_zero(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        raw_zero[i] = n0[i] - delta_minus * basis.basis_minus[i];
    basis.basis_zero = detail::clip_and_normalize(grid, raw_zero, "build_basis[zero]");

    basis.delta0 = delta0;
    basis.delta_minus = delta_minus;
    basis.validate();
    return basis;
}

// Grid searches for the subtraction weights: each delta minimizes the foreign
// ZPL feature left in the corresponding basis function.
inline double optimize_delta0(const Spectrum& i0_pre, const Spectrum& i_minus_pre,
                              double step = 0.005, double max_delta = 0.5) {
    detail::require_same_grid(i0_pre.wavelengths_nm, i_minus_pre.wavelengths_nm,
                              "optimize_delta0");
    const auto& grid = i0_pre.wavelengths_nm;
    const std::vector<double> n0 = detail::normalized_intensities(i0_pre, "optimize_delta0");
    const std::vector<double> nm =
        detail::normalized_intensities(i_minus_pre, "optimize_delta0");
    double best_delta = 0.0, best_res = 0.0;
    bool first = true;
    std::vector<double> v(grid.size());
    for (double d = 0.0; d <= max_delta + 1e-12; d += step) {
        for (std::size_t i = 0; i < grid.size(); ++i) v[i] = nm[i] - d * n0[i];
        const double res = detail::zpl_feature_residual(grid, v, kZplWindowNvZeroNm[0],
                                                        kZplWindowNvZeroNm[1]);
        if (first || res < best_res) {
            best_res = res;
            best_delta = d;
            first = false;
        }
    }
    return best_delta;
}

inline double optimize_delta_minus(const Spectrum& i0_pre, const BasisSet& partial,
                                   double step = 0.005, double max_delta = 0.5) {
    detail::require_same_grid(i0_pre.wavelengths_nm, partial.wavelength_grid,
                              "optimize_delta_minus");
    const auto& grid = i0_pre.wavelengths_nm;
    const std::vector<double> n0 =
        detail::normalized_intensities(i0_pre, "optimize_delta_minus");
    double best_delta = 0.0, best_res = 0.0;
    bool first = true;
    std::vector<double> v(grid.size());
    for (double d = 0.0; d <= max_delta + 1e-12; d += step) {
        for (std::size_t i = 0; i < grid.size(); ++i) v[i] = n0[i] - d * partial.basis_minus[i];
        const double res = detail::zpl_feature_residual(grid, v, kZplWindowNvMinusNm[0],
                                                        kZplWindowNvMinusNm[1]);
        if (first || res < best_res) {
            best_res = res;
            best_delta = d;
            first = false;
        }
    }
    return best_delta;
}

// Fractional contributions of the two basis functions to a spectrum.
struct Decomposition {
    double c_minus = 0.0;
    double c_zero = 0.0;
    double c_sigma = 0.0;       // standard error of c_minus (= that of c_zero)
    double residual_rms = 0.0;  // counts/s
    FitResult fit;              // params = {w_minus, w_zero}, raw component weights

    double weight_minus() const { return fit.params[0]; }
    double weight_zero() const { return fit.params[1]; }
};

// Nonnegative linear least squares of the spectrum against the two basis
// functions (active-set enumeration for the two-variable case).
inline Decomposition decompose(const Spectrum& spectrum, const BasisSet& basis) {
    spectrum.validate();
    detail::require_same_grid(spectrum.wavelengths_nm, basis.wavelength_grid, "decompose");

    const auto& y = spectrum.intensities;
    const auto& bm = basis.basis_minus;
    const auto& bz = basis.basis_zero;
    const std::size_t n = y.size();

    double ymax = 0.0;
    for (double v : y) ymax = std::max(ymax, std::fabs(v));
    if (ymax == 0.0) throw DegenerateInputError("decompose: all-zero spectrum");

    double gmm = 0, gmz = 0, gzz = 0, rm = 0, rz = 0, yy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        gmm += bm[i] * bm[i];
        gmz += bm[i] * bz[i];
        gzz += bz[i] * bz[i];
        rm += bm[i] * y[i];
        rz += bz[i] * y[i];
        yy += y[i] * y[i];
    }
    const double det = gmm * gzz - gmz * gmz;
    if (!(det > 1e-14 * gmm * gzz))
        throw DegenerateInputError("decompose: basis functions are collinear");

    auto rss_of = [&](double wm, double wz) {
        return yy - 2.0 * (wm * rm + wz * rz) + wm * wm * gmm + 2.0 * wm * wz * gmz +
               wz * wz * gzz;
    };

    // unconstrained solution, then active-set fallback onto the axes
    double wm = (rm * gzz - rz * gmz) / det;
    double wz = (rz * gmm - rm * gmz) / det;
    if (wm < 0.0 || wz < 0.0) {
        const double wm_only = std::max(0.0, rm / gmm);
        const double wz_only = std::max(0.0, rz / gzz);
        if (rss_of(wm_only, 0.0) <= rss_of(0.0, wz_only)) {
            wm = wm_only;
            wz = 0.0;
        } else {
            wm = 0.0;
            wz = wz_only;
        }
    }

    const double total = wm + wz;
    if (!(total > 0.0)) throw DegenerateInputError("decompose: zero total weight");

    const double rss = std::max(0.0, rss_of(wm, wz));
    const std::size_t dof = (n > 2) ? n - 2 : 1;
    const double s2 = rss / static_cast<double>(dof);

    FitResult fr;
    fr.params = {wm, wz};
    fr.covariance = {{s2 * gzz / det, -s2 * gmz / det}, {-s2 * gmz / det, s2 * gmm / det}};
    fr.std_errors = {std::sqrt(fr.covariance[0][0]), std::sqrt(fr.covariance[1][1])};
    fr.chi_squared = rss;
    fr.dof = dof;

    Decomposition dec;
    dec.fit = std::move(fr);
    dec.c_minus = wm / total;
    dec.c_zero = wz / total;
    dec.residual_rms = std::sqrt(rss / static_cast<double>(n));

    // delta-method error of c_minus = wm / (wm + wz)
    const double dm = wz / (total * total);
    const double dz = -wm / (total * total);
    const auto& cov = dec.fit.covariance;
    dec.c_sigma = std::sqrt(std::max(
        0.0, dm * dm * cov[0][0] + dz * dz * cov[1][1] + 2.0 * dm * dz * cov[0][1]));
    return dec;
}

// NV- fraction from the fractional contributions and the photoluminescence
// correction factor: f = c- / (c- + kappa * c0). First-order propagation of
// the decomposition and kappa errors.
inline ValueWithError nv_minus_fraction(const Decomposition& dec, double kappa,
                                        double kappa_err = 0.0) {
    if (!(kappa > 0.0)) throw DomainError("nv_minus_fraction: kappa must be > 0");
    if (dec.c_minus == 0.0 && dec.c_zero == 0.0)
        throw DomainError("nv_minus_fraction: c_minus and c_zero are both zero");
    const double c = dec.c_minus;
    const double denom = c + kappa * (1.0 - c);
    const double f = c / denom;
    const double df_dc = kappa / (denom * denom);
    const double df_dk = -c * (1.0 - c) / (denom * denom);
    const double var = df_dc * df_dc * dec.c_sigma * dec.c_sigma +
                       df_dk * df_dk * kappa_err * kappa_err;
    return {f, std::sqrt(var)};
}

struct KappaEstimate {
    double kappa = 0.0;
    double std_error = 0.0;
    FitResult slope_minus_fit;
    FitResult slope_zero_fit;
};

// Kappa from a power series of spectra recorded well below saturation: the
// integrated component intensities are fitted linearly against power
// (inverse-variance weights) and kappa is the quotient slope_minus/slope_zero.
inline KappaEstimate estimate_kappa(
    const std::vector<std::pair<double, Spectrum>>& power_series, const BasisSet& basis) {
    if (power_series.size() < 3)
        throw InsufficientDataError("estimate_kappa: need >= 3 laser powers");

    std::vector<double> p, im, iz, sm, sz;
    for (const auto& [power, spec] : power_series) {
        if (!(power > 0.0)) throw DomainError("estimate_kappa: powers must be > 0");
        Decomposition dec = decompose(spec, basis);
        p.push_back(power);
        // basis functions integrate to one, so the fitted weights are the
        // integrated component intensities
        im.push_back(dec.weight_minus());
        iz.push_back(dec.weight_zero());
        sm.push_back(dec.fit.std_errors[0]);
        sz.push_back(dec.fit.std_errors[1]);
    }

    // noise-free synthetic data can produce zero decomposition errors; fall
    // back to an unweighted fit with residual-scaled errors
    bool weights_ok = true;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (!(sm[i] > 0.0) || !(sz[i] > 0.0) || !std::isfinite(sm[i]) || !std::isfinite(sz[i]))
            weights_ok = false;

    FitResult fm, fz;
    if (weights_ok) {
        fm = weighted_linear_fit(p, im, sm);
        fz = weighted_linear_fit(p, iz, sz);
    } else {
        fm = ols_linear_fit(p, im);
        fz = ols_linear_fit(p, iz);
    }

    const double slope_m = fm.params[0];
    const double slope_z = fz.params[0];
    if (!(slope_z > 0.0))
        throw CalibrationError("estimate_kappa: NV0 slope is not positive");

    KappaEstimate out;
    out.kappa = slope_m / slope_z;
    const double rel_m = fm.std_errors[0] / slope_m;
    const double rel_z = fz.std_errors[0] / slope_z;
    out.std_error = std::fabs(out.kappa) * std::sqrt(rel_m * rel_m + rel_z * rel_z);
    out.slope_minus_fit = std::move(fm);
    out.slope_zero_fit = std::move(fz);
    return out;
}

// Population variance of the NV- fraction across temperatures (one value per
// laser power in the calling pipeline).
inline double fraction_variance(const std::vector<double>& fractions) {
    if (fractions.size() < 2)
        throw InsufficientDataError("fraction_variance: need >= 2 temperatures");
    double mean = 0.0;
    for (double f : fractions) mean += f;
    mean /= static_cast<double>(fractions.size());
    double var = 0.0;
    for (double f : fractions) var += (f - mean) * (f - mean);
    return var / static_cast<double>(fractions.size());
}

// Lorentzian ZPL on a linear local baseline.
struct ZplFit {
    double center_nm = 0.0;
    double center_err_nm = 0.0;
    double fwhm_nm = 0.0;
    double fwhm_err_nm = 0.0;
    double amplitude = 0.0;  // counts/s above baseline at the peak
    double baseline = 0.0;   // counts/s under the peak center
    FitResult fit;           // params = {A, center, fwhm, c0, c1}
};

// Least-squares Lorentzian-plus-linear-baseline fit inside a window around
// the nominal ZPL (575 nm for NV0, 639 nm for NV-).
inline ZplFit fit_zpl(const Spectrum& spectrum, double window_lo_nm, double window_hi_nm,
                      SpectralComponent component) {
    spectrum.validate();
    if (!(window_lo_nm < window_hi_nm)) throw DomainError("fit_zpl: empty window");
    const double nominal = component == SpectralComponent::nv_minus ? kZplCenterNvMinusNm
                                                                    : kZplCenterNvZeroNm;
    if (nominal < window_lo_nm || nominal > window_hi_nm)
        throw DomainError("fit_zpl: window does not contain the nominal ZPL of " +
                          std::string(component == SpectralComponent::nv_minus ? "NV-" : "NV0"));

    std::vector<double> x, y;
    for (std::size_t i = 0; i < spectrum.size(); ++i)
        if (spectrum.wavelengths_nm[i] >= window_lo_nm &&
            spectrum.wavelengths_nm[i] <= window_hi_nm) {
            x.push_back(spectrum.wavelengths_nm[i]);
            y.push_back(spectrum.intensities[i]);
        }
    if (x.size() < 8) throw InsufficientDataError("fit_zpl: need >= 8 samples in the window");

    // initial guess: line through the window edges, peak from the largest
    // residual, width from its half-maximum crossings
    const double x_ref = 0.5 * (window_lo_nm + window_hi_nm);
    const double slope0 = (y.back() - y.front()) / (x.back() - x.front());
    const double c00 = y.front() + slope0 * (x_ref - x.front());
    std::size_t ipk = 0;
    double peak = -1e300;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (c00 + slope0 * (x[i] - x_ref));
        if (r > peak) {
            peak = r;
            ipk = i;
        }
    }
    double lo_cross = x[ipk], hi_cross = x[ipk];
    for (std::size_t i = ipk; i-- > 0;) {
        const double r = y[i] - (c00 + slope0 * (x[i] - x_ref));
        if (r < 0.5 * peak) break;
        lo_cross = x[i];
    }
    for (std::size_t i = ipk + 1; i < x.size(); ++i) {
        const double r = y[i] - (c00 + slope0 * (x[i] - x_ref));
        if (r < 0.5 * peak) break;
        hi_cross = x[i];
    }
    double fwhm0 = hi_cross - lo_cross;
    if (!(fwhm0 > 0.0)) fwhm0 = (window_hi_nm - window_lo_nm) / 8.0;

    ModelSpec spec;
    spec.model_id = "zpl_lorentz_linear";
    spec.f = [x_ref](double xx, const std::vector<double>& pp) {
        return models::lorentz_linear(xx, pp, x_ref);
    };
    spec.df = [x_ref](double xx, const std::vector<double>& pp, std::vector<double>& g) {
        models::lorentz_linear_grad(xx, pp, x_ref, g);
    };
    spec.initial = {std::max(peak, 1e-6), x[ipk], fwhm0, c00, slope0};
    const double inf = std::numeric_limits<double>::infinity();
    const double min_step = (x.back() - x.front()) / static_cast<double>(x.size());
    spec.lower = {0.0, window_lo_nm, 0.25 * min_step, -inf, -inf};
    spec.upper = {inf, window_hi_nm, 4.0 * (window_hi_nm - window_lo_nm), inf, inf};

    // Poisson-style weights on the recorded rates
    std::vector<double> sigma(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        sigma[i] = std::sqrt((std::max(y[i], 0.0) + 1.0) / spectrum.exposure_s);

    FitResult fr = fit_least_squares(spec, x, y, sigma, true);

    ZplFit out;
    out.center_nm = fr.params[1];
    out.center_err_nm = fr.std_errors[1];
    out.fwhm_nm = fr.params[2];
    out.fwhm_err_nm = fr.std_errors[2];
    out.amplitude = fr.params[0];
    out.baseline = fr.params[3] + fr.params[4] * (fr.params[1] - x_ref);
    out.fit = std::move(fr);
    return out;
}

}  // namespace nvrelax
