#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nvrelax/core.hpp"
#include "nvrelax/errors.hpp"

// Weighted least-squares engine (closed-form linear + Levenberg-Marquardt)
// and the concrete model fits used by the analysis chain.

namespace nvrelax {

namespace detail {

// Solve A x = b for a small symmetric positive-definite matrix (row-major,
// n x n) by Cholesky decomposition. Returns false if not positive definite.
inline bool cholesky_solve(std::vector<double> a, std::vector<double> b,
                           std::size_t n, std::vector<double>& x) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (!(s > 0.0)) return false;
                a[i * n + i] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    x.assign(n, 0.0);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= a[k * n + ii] * x[k];
        x[ii] = s / a[ii * n + ii];
    }
    return true;
}

// Invert a small symmetric matrix, escalating a diagonal ridge if it is
// singular; near-unidentifiable directions then come out with huge variances
// instead of aborting the fit.
inline std::vector<double> invert_spd_with_ridge(std::vector<double> a, std::size_t n) {
    double maxdiag = 0.0;
    for (std::size_t i = 0; i < n; ++i) maxdiag = std::max(maxdiag, std::fabs(a[i * n + i]));
    if (maxdiag == 0.0) maxdiag = 1.0;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
        std::vector<double> work = a;
        if (ridge > 0.0)
            for (std::size_t i = 0; i < n; ++i) work[i * n + i] += ridge;
        std::vector<double> inv(n * n, 0.0);
        bool ok = true;
        for (std::size_t col = 0; col < n && ok; ++col) {
            std::vector<double> e(n, 0.0), x;
            e[col] = 1.0;
            ok = cholesky_solve(work, e, n, x);
            if (ok)
                for (std::size_t row = 0; row < n; ++row) inv[row * n + col] = x[row];
        }
        if (ok) return inv;
        ridge = (ridge == 0.0) ? 1e-14 * maxdiag : ridge * 10.0;
    }
    throw SingularDesignError("invert_spd_with_ridge: matrix not invertible");
}

inline std::vector<std::vector<double>> to_nested(const std::vector<double>& flat,
                                                  std::size_t n) {
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i][j] = flat[i * n + j];
    return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear fits
// ---------------------------------------------------------------------------

// Inverse-variance weighted straight-line fit, closed form.
// params = {slope, intercept}. Errors come from the analytic covariance,
// scaled by the reduced chi-squared when it exceeds one.
inline FitResult weighted_linear_fit(const std::vector<double>& x,
                                     const std::vector<double>& y,
                                     const std::vector<double>& sigma) {
    if (x.size() != y.size() || x.size() != sigma.size())
        throw ShapeError("weighted_linear_fit: size mismatch");
    if (x.size() < 2) throw InsufficientDataError("weighted_linear_fit: need >= 2 points");
    for (double s : sigma)
        if (!(s > 0.0) || !std::isfinite(s))
            throw DomainError("weighted_linear_fit: sigma must be finite and > 0 elementwise");

    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double w = 1.0 / (sigma[i] * sigma[i]);
        sw += w;
        swx += w * x[i];
        swy += w * y[i];
        swxx += w * x[i] * x[i];
        swxy += w * x[i] * y[i];
    }
    const double delta = sw * swxx - swx * swx;
    if (!(std::fabs(delta) > 1e-14 * sw * swxx))
        throw SingularDesignError("weighted_linear_fit: singular design (all x identical?)");

    const double slope = (sw * swxy - swx * swy) / delta;
    const double intercept = (swxx * swy - swx * swxy) / delta;

    double chi2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = (y[i] - slope * x[i] - intercept) / sigma[i];
        chi2 += r * r;
    }
    const std::size_t dof = std::max<std::size_t>(1, x.size() - 2);
    const double scale = (x.size() > 2) ? std::max(1.0, chi2 / static_cast<double>(dof)) : 1.0;

    FitResult fr;
    fr.params = {slope, intercept};
    fr.covariance = {{scale * sw / delta, -scale * swx / delta},
                     {-scale * swx / delta, scale * swxx / delta}};
    fr.std_errors = {std::sqrt(fr.covariance[0][0]), std::sqrt(fr.covariance[1][1])};
    fr.chi_squared = chi2;
    fr.dof = dof;
    return fr;
}

// Ordinary least-squares line for data with unknown noise scale: errors are
// always rescaled by the residual variance. Used internally for degenerate
// (sigma-free) inputs and for initialization heuristics.
inline FitResult ols_linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> ones(x.size(), 1.0);
    FitResult fr = weighted_linear_fit(x, y, ones);
    const double s2 = fr.chi_squared / static_cast<double>(fr.dof);
    const double corr = (fr.chi_squared > static_cast<double>(fr.dof)) ? 1.0 : s2;
    // weighted_linear_fit already applied max(1, chi2red); bring the scaling
    // to exactly chi2red in both regimes.
    for (auto& row : fr.covariance)
        for (auto& v : row) v *= corr;
    for (auto& e : fr.std_errors) e *= std::sqrt(corr);
    return fr;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt engine
// ---------------------------------------------------------------------------

using ModelFunc = std::function<double(double, const std::vector<double>&)>;
using ModelGrad =
    std::function<void(double, const std::vector<double>&, std::vector<double>&)>;

// Residual-model description: model id plus fixed configuration are bound
// into the callables; free parameters travel in the vectors below.
struct ModelSpec {
    std::string model_id;
    ModelFunc f;
    ModelGrad df;
    std::vector<double> initial;
    std::vector<double> lower;  // empty = unbounded
    std::vector<double> upper;
    double cost_tol = 1e-10;
    double grad_tol = 1e-10;
    double step_tol = 1e-12;
    int max_iterations = 500;

    void validate() const {
        if (initial.empty()) throw DomainError("ModelSpec: no parameters");
        if (!lower.empty() && lower.size() != initial.size())
            throw ShapeError("ModelSpec: bounds size mismatch");
        if (!upper.empty() && upper.size() != initial.size())
            throw ShapeError("ModelSpec: bounds size mismatch");
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (lower[i] > upper[i]) throw DomainError("ModelSpec: bounds out of order");
        if (!(cost_tol > 0.0 && grad_tol > 0.0 && step_tol > 0.0))
            throw DomainError("ModelSpec: tolerances must be > 0");
    }
};

namespace detail {

inline void clamp_to_bounds(const ModelSpec& spec, std::vector<double>& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!spec.lower.empty()) p[i] = std::max(p[i], spec.lower[i]);
        if (!spec.upper.empty()) p[i] = std::min(p[i], spec.upper[i]);
    }
}

struct LmWorkspace {
    double cost = 0.0;
    std::vector<double> grad;     // J^T r
    std::vector<double> hessian;  // J^T J, flat row-major
};

inline LmWorkspace lm_evaluate(const ModelSpec& spec, const std::vector<double>& x,
                               const std::vector<double>& y,
                               const std::vector<double>& sigma,
                               const std::vector<double>& p) {
    const std::size_t n = p.size();
    LmWorkspace w;
    w.grad.assign(n, 0.0);
    w.hessian.assign(n * n, 0.0);
    std::vector<double> g(n);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double inv_s = 1.0 / sigma[i];
        const double r = (y[i] - spec.f(x[i], p)) * inv_s;
        w.cost += r * r;
        spec.df(x[i], p, g);
        for (std::size_t j = 0; j < n; ++j) {
            const double jij = g[j] * inv_s;
            w.grad[j] += r * jij;
            for (std::size_t k = 0; k <= j; ++k)
                w.hessian[j * n + k] += jij * g[k] * inv_s;
        }
    }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k) w.hessian[j * n + k] = w.hessian[k * n + j];
    return w;
}

}  // namespace detail

// Levenberg-Marquardt minimization of sum((y - f(x; p))^2 / sigma^2).
// Damping starts at 1e-3, x10 on rejection, /10 on acceptance. Box bounds
// are enforced by clamping trial steps. `sigmas_known` selects the error
// convention: measured sigmas scale the covariance by reduced chi-squared
// only when it exceeds one; unit/unknown sigmas always rescale.
inline FitResult fit_least_squares(const ModelSpec& spec, const std::vector<double>& x,
                                   const std::vector<double>& y,
                                   const std::vector<double>& sigma,
                                   bool sigmas_known = true) {
    spec.validate();
    if (x.size() != y.size() || x.size() != sigma.size())
        throw ShapeError("fit_least_squares: size mismatch");
    if (x.size() <= spec.initial.size())
        throw InsufficientDataError("fit_least_squares: more parameters than data points");
    for (double s : sigma)
        if (!(s > 0.0) || !std::isfinite(s))
            throw DomainError("fit_least_squares: sigma must be finite and > 0 elementwise");

    const std::size_t n = spec.initial.size();
    std::vector<double> p = spec.initial;
    detail::clamp_to_bounds(spec, p);

    detail::LmWorkspace cur = detail::lm_evaluate(spec, x, y, sigma, p);
    double lambda = 1e-3;
    int iter = 0;
    bool converged = false;

    // Parameters pinned at a bound with the gradient pointing outward are
    // frozen for the step (active-set treatment); the convergence test uses
    // the reduced gradient.
    auto frozen_at_bound = [&](const std::vector<double>& params,
                               const std::vector<double>& grad) {
        std::vector<bool> frozen(n, false);
        if (!spec.lower.empty())
            for (std::size_t j = 0; j < n; ++j) {
                if (params[j] <= spec.lower[j] && grad[j] < 0.0) frozen[j] = true;
                if (params[j] >= spec.upper[j] && grad[j] > 0.0) frozen[j] = true;
            }
        return frozen;
    };
    auto reduced_grad_norm = [&](const std::vector<double>& grad,
                                 const std::vector<bool>& frozen) {
        double m = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (!frozen[j]) m = std::max(m, std::fabs(grad[j]));
        return m;
    };

    {
        const auto frozen0 = frozen_at_bound(p, cur.grad);
        if (reduced_grad_norm(cur.grad, frozen0) < spec.grad_tol || cur.cost == 0.0)
            converged = true;
    }

    while (!converged && iter < spec.max_iterations) {
        ++iter;
        const std::vector<bool> frozen = frozen_at_bound(p, cur.grad);
        // damped normal equations on the free subset:
        // (H + lambda * diag(H)) step = grad
        std::vector<double> damped = cur.hessian;
        std::vector<double> grad = cur.grad;
        for (std::size_t j = 0; j < n; ++j) {
            if (!frozen[j]) continue;
            grad[j] = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                damped[j * n + k] = 0.0;
                damped[k * n + j] = 0.0;
            }
            damped[j * n + j] = 1.0;
        }
        double maxdiag = 0.0;
        for (std::size_t j = 0; j < n; ++j) maxdiag = std::max(maxdiag, damped[j * n + j]);
        if (maxdiag <= 0.0) maxdiag = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            double d = damped[j * n + j];
            if (d < 1e-12 * maxdiag) d = 1e-12 * maxdiag;
            damped[j * n + j] += lambda * d;
        }
        std::vector<double> step;
        if (!detail::cholesky_solve(damped, grad, n, step)) {
            lambda *= 10.0;
            if (lambda > 1e14)
                throw FitError("fit_least_squares[" + spec.model_id +
                                   "]: singular normal equations",
                               iter, cur.cost);
            continue;
        }
        std::vector<double> trial = p;
        for (std::size_t j = 0; j < n; ++j) trial[j] += step[j];
        detail::clamp_to_bounds(spec, trial);

        detail::LmWorkspace next = detail::lm_evaluate(spec, x, y, sigma, trial);
        if (next.cost <= cur.cost) {
            double step_size = 0.0, p_size = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                step_size += (trial[j] - p[j]) * (trial[j] - p[j]);
                p_size += p[j] * p[j];
            }
            const bool cost_done =
                (cur.cost - next.cost) <= spec.cost_tol * std::max(cur.cost, 1e-300);
            const bool step_done =
                std::sqrt(step_size) <= spec.step_tol * (std::sqrt(p_size) + spec.step_tol);
            p = trial;
            cur = next;
            lambda = std::max(lambda / 10.0, 1e-12);
            const auto frozen_now = frozen_at_bound(p, cur.grad);
            if (cost_done || step_done ||
                reduced_grad_norm(cur.grad, frozen_now) < spec.grad_tol || cur.cost == 0.0)
                converged = true;
        } else {
            lambda *= 10.0;
            if (lambda > 1e14) break;
        }
    }
    bool stalled = false;
    if (!converged) {
        if (lambda > 1e14 && iter < spec.max_iterations) {
            // steps at maximal damping no longer improve the cost: we are at
            // the numerical floor of this minimum
            converged = true;
            stalled = true;
        } else {
            throw FitError("fit_least_squares[" + spec.model_id + "]: no convergence", iter,
                           cur.cost);
        }
    }

    FitResult fr;
    fr.params = p;
    if (stalled) fr.warnings.push_back("converged-at-damping-limit");
    fr.chi_squared = cur.cost;
    fr.dof = std::max<std::size_t>(1, x.size() - n);
    fr.converged = true;
    fr.iterations = iter;

    const double chi2red = cur.cost / static_cast<double>(fr.dof);
    double scale = 1.0;
    if (sigmas_known)
        scale = std::max(1.0, chi2red);
    else
        scale = chi2red;
    std::vector<double> cov = detail::invert_spd_with_ridge(cur.hessian, n);
    for (auto& v : cov) v *= scale;
    fr.covariance = detail::to_nested(cov, n);
    fr.std_errors.resize(n);
    for (std::size_t j = 0; j < n; ++j)
        fr.std_errors[j] = std::sqrt(std::max(0.0, fr.covariance[j][j]));
    return fr;
}

// ---------------------------------------------------------------------------
// Concrete models
// ---------------------------------------------------------------------------

namespace models {

// p = {A, T, y0}: A * exp(-t/T) + y0
inline double monoexp(double t, const std::vector<double>& p) {
    return p[0] * std::exp(-t / p[1]) + p[2];
}
inline void monoexp_grad(double t, const std::vector<double>& p, std::vector<double>& g) {
    const double e = std::exp(-t / p[1]);
    g.resize(3);
    g[0] = e;
    g[1] = p[0] * e * t / (p[1] * p[1]);
    g[2] = 1.0;
}

// p = {A, T1, B, T2, C}: A * exp(-t/T1) + B * exp(-t/T2) + C
inline double biexp(double t, const std::vector<double>& p) {
    return p[0] * std::exp(-t / p[1]) + p[2] * std::exp(-t / p[3]) + p[4];
}
inline void biexp_grad(double t, const std::vector<double>& p, std::vector<double>& g) {
    const double e1 = std::exp(-t / p[1]);
    const double e2 = std::exp(-t / p[3]);
    g.resize(5);
    g[0] = e1;
    g[1] = p[0] * e1 * t / (p[1] * p[1]);
    g[2] = e2;
    g[3] = p[2] * e2 * t / (p[3] * p[3]);
    g[4] = 1.0;
}

// p = {a, n, c}: a * x^n + c  (x > 0)
inline double power_law(double x, const std::vector<double>& p) {
    return p[0] * std::pow(x, p[1]) + p[2];
}
inline void power_law_grad(double x, const std::vector<double>& p, std::vector<double>& g) {
    const double xn = std::pow(x, p[1]);
    g.resize(3);
    g[0] = xn;
    g[1] = p[0] * xn * std::log(x);
    g[2] = 1.0;
}

// p = {A, x0, fwhm, c0, c1}: Lorentzian peak on a linear baseline anchored at
// a fixed reference abscissa x_ref (not fitted):
//   A / (1 + u^2) + c0 + c1 * (x - x_ref),  u = 2 (x - x0) / fwhm
inline double lorentz_linear(double x, const std::vector<double>& p, double x_ref) {
    const double u = 2.0 * (x - p[1]) / p[2];
    return p[0] / (1.0 + u * u) + p[3] + p[4] * (x - x_ref);
}
inline void lorentz_linear_grad(double x, const std::vector<double>& p, double x_ref,
                                std::vector<double>& g) {
    const double u = 2.0 * (x - p[1]) / p[2];
    const double d = 1.0 + u * u;
    g.resize(5);
    g[0] = 1.0 / d;
    g[1] = p[0] * (2.0 * u / (d * d)) * (2.0 / p[2]);
    g[2] = p[0] * (2.0 * u / (d * d)) * (u / p[2]);
    g[3] = 1.0;
    g[4] = x - x_ref;
}

}  // namespace models

namespace detail {

// Log-linear estimate of (amplitude, time constant) for y ~ amp * exp(-t/T),
// given a fixed offset estimate. Sign-aware: works for rising transients
// (negative amplitude) as well as decays.
inline void exp_guess(const std::vector<double>& t, const std::vector<double>& y,
                      double offset, double& amp, double& tau) {
    const double a0 = y.front() - offset;
    const double dir = (a0 >= 0.0) ? 1.0 : -1.0;
    double peak = 0.0;
    for (double v : y) peak = std::max(peak, std::fabs(v - offset));
    std::vector<double> lt, ly;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double d = dir * (y[i] - offset);
        if (d > 1e-3 * peak) {
            lt.push_back(t[i]);
            ly.push_back(std::log(d));
        }
    }
    const double span = t.back() - t.front();
    if (lt.size() < 2 || peak == 0.0) {
        amp = a0;
        tau = (span > 0.0) ? span / 3.0 : 1.0;
        return;
    }
    FitResult line = ols_linear_fit(lt, ly);
    const double slope = line.params[0];
    tau = (slope < -1e-300) ? -1.0 / slope : ((span > 0.0) ? span : 1.0);
    amp = dir * std::exp(line.params[1]);
    if (!(tau > 0.0) || !std::isfinite(tau)) tau = (span > 0.0) ? span / 3.0 : 1.0;
    if (span > 0.0) tau = std::min(tau, 100.0 * span);
    if (!std::isfinite(amp)) amp = a0;
}

inline void require_ascending(const std::vector<double>& t, const char* who) {
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw DomainError(std::string(who) + ": t must be ascending");
}

}  // namespace detail

// Monoexponential fit y = A exp(-t/T) + y0; params = {A, T, y0}.
// Initial guess from a log-linear regression against the plateau estimate.
inline FitResult fit_monoexp(const std::vector<double>& t, const std::vector<double>& y,
                             const std::vector<double>& sigma, bool sigmas_known = true) {
    if (t.size() < 4) throw InsufficientDataError("fit_monoexp: need >= 4 points");
    detail::require_ascending(t, "fit_monoexp");

    const bool decaying = y.front() >= y.back();
    const double offset = decaying ? *std::min_element(y.begin(), y.end())
                                   : *std::max_element(y.begin(), y.end());
    double amp = 0.0, tau = 1.0;
    detail::exp_guess(t, y, offset, amp, tau);

    ModelSpec spec;
    spec.model_id = "monoexp";
    spec.f = models::monoexp;
    spec.df = models::monoexp_grad;
    spec.initial = {amp, tau, offset};
    spec.lower = {-std::numeric_limits<double>::infinity(), 1e-30,
                  -std::numeric_limits<double>::infinity()};
    spec.upper = {std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::infinity()};
    FitResult fr = fit_least_squares(spec, t, y, sigma, sigmas_known);
    if (fr.std_errors[1] > 10.0 * std::fabs(fr.params[1]))
        fr.warnings.push_back("time-constant-unidentifiable");
    return fr;
}

// Biexponential fit y = A exp(-t/T1) + B exp(-t/T2) + C with the reporting
// convention T1 < T2 (components are swapped and relabeled if needed).
// params = {A, T_R1, B, T_R2, C}.
inline FitResult fit_biexp(const std::vector<double>& t, const std::vector<double>& y,
                           const std::vector<double>& sigma, bool sigmas_known = true) {
    if (t.size() < 7) throw InsufficientDataError("fit_biexp: need >= 7 points");
    detail::require_ascending(t, "fit_biexp");
    if (!(t.front() > 0.0) || t.back() / t.front() < 100.0)
        throw InsufficientDataError("fit_biexp: t must span >= 2 decades (t > 0)");

    // initialization: fit the slow tail beyond the geometric midpoint first,
    // then the fast remainder below it
    const double t_mid = std::sqrt(t.front() * t.back());
    std::vector<double> ts, ys, tf, yf;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] >= t_mid) {
            ts.push_back(t[i]);
            ys.push_back(y[i]);
        } else {
            tf.push_back(t[i]);
            yf.push_back(y[i]);
        }
    }

    const bool decaying = y.front() >= y.back();
    double offset = decaying ? *std::min_element(y.begin(), y.end())
                             : *std::max_element(y.begin(), y.end());
    double b_amp = 0.0, t_slow = t.back() / 3.0;
    if (ts.size() >= 2) detail::exp_guess(ts, ys, offset, b_amp, t_slow);
    double a_amp = 0.0, t_fast = std::max(t.front(), t_mid / 10.0);
    if (tf.size() >= 2) {
        std::vector<double> resid(tf.size());
        for (std::size_t i = 0; i < tf.size(); ++i)
            resid[i] = yf[i] - (b_amp * std::exp(-tf[i] / t_slow) + offset);
        detail::exp_guess(tf, resid, 0.0, a_amp, t_fast);
    }
    if (!(t_fast > 0.0)) t_fast = t_mid / 10.0;
    if (!(t_slow > t_fast)) t_slow = 10.0 * t_fast;
    if (a_amp == 0.0) a_amp = 0.5 * (y.front() - offset);
    if (b_amp == 0.0) b_amp = 0.5 * (y.front() - offset);

    ModelSpec spec;
    spec.model_id = "biexp";
    spec.f = models::biexp;
    spec.df = models::biexp_grad;
    spec.initial = {a_amp, t_fast, b_amp, t_slow, offset};
    const double inf = std::numeric_limits<double>::infinity();
    spec.lower = {-inf, 1e-30, -inf, 1e-30, -inf};
    spec.upper = {inf, inf, inf, inf, inf};
    FitResult fr = fit_least_squares(spec, t, y, sigma, sigmas_known);

    if (fr.params[1] > fr.params[3]) {
        std::swap(fr.params[0], fr.params[2]);
        std::swap(fr.params[1], fr.params[3]);
        std::swap(fr.std_errors[0], fr.std_errors[2]);
        std::swap(fr.std_errors[1], fr.std_errors[3]);
        // permute covariance rows/columns (0<->2, 1<->3)
        const std::size_t perm[5] = {2, 3, 0, 1, 4};
        auto old = fr.covariance;
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) fr.covariance[i][j] = old[perm[i]][perm[j]];
    }
    const double ratio = fr.params[1] / fr.params[3];
    if (ratio >= 0.8 && ratio <= 1.25)
        fr.warnings.push_back("near-degenerate-time-constants");
    const double amp_scale = std::fabs(fr.params[0]) + std::fabs(fr.params[2]);
    for (std::size_t comp : {std::size_t{0}, std::size_t{2}}) {
        const bool tiny_amp = std::fabs(fr.params[comp]) < 1e-3 * amp_scale;
        const bool loose_time = fr.std_errors[comp + 1] > 10.0 * fr.params[comp + 1];
        if (tiny_amp || loose_time) {
            fr.warnings.push_back(comp == 0 ? "fast-component-degenerate"
                                            : "slow-component-degenerate");
        }
    }
    return fr;
}

// Power-law fit y = a x^n + c with n bounded to [0.1, 5]; params = {a, n, c}.
inline FitResult fit_power_law(const std::vector<double>& x, const std::vector<double>& y,
                               const std::vector<double>& sigma, bool sigmas_known = true) {
    if (x.size() < 4) throw InsufficientDataError("fit_power_law: need >= 4 points");
    for (double v : x)
        if (!(v > 0.0)) throw DomainError("fit_power_law: x must be > 0 elementwise");

    // guess: subtract a plateau estimate, then regress log-log
    const double ymin = *std::min_element(y.begin(), y.end());
    const double ymax = *std::max_element(y.begin(), y.end());
    const double c0 = ymin - 0.05 * (ymax - ymin);
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (y[i] - c0 > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i] - c0));
        }
    double a0 = 1.0, n0 = 1.0;
    if (lx.size() >= 2) {
        FitResult line = ols_linear_fit(lx, ly);
        n0 = std::clamp(line.params[0], 0.1, 5.0);
        a0 = std::exp(line.params[1]);
    }

    ModelSpec spec;
    spec.model_id = "power_law";
    spec.f = models::power_law;
    spec.df = models::power_law_grad;
    spec.initial = {a0, n0, c0};
    const double inf = std::numeric_limits<double>::infinity();
    spec.lower = {-inf, 0.1, -inf};
    spec.upper = {inf, 5.0, inf};
    return fit_least_squares(spec, x, y, sigma, sigmas_known);
}

// Single-parameter fit of the phonon model: with a2, a3, delta fixed, the
// weighted least-squares estimate of a1 is the inverse-variance weighted mean
// of (1/T1 - fixed terms). params = {a1}.
inline FitResult fit_t1_temperature_model(const std::vector<double>& temps_k,
                                          const std::vector<double>& inv_t1,
                                          const std::vector<double>& sigma,
                                          const TemperatureModel& fixed,
                                          double boltzmann_ev_per_k = kBoltzmannEvPerK) {
    if (temps_k.size() != inv_t1.size() || temps_k.size() != sigma.size())
        throw ShapeError("fit_t1_temperature_model: size mismatch");
    if (temps_k.size() < 2)
        throw InsufficientDataError("fit_t1_temperature_model: need >= 2 temperatures");
    if (!(fixed.a2 >= 0.0) || !(fixed.a3 >= 0.0) || !(fixed.delta > 0.0))
        throw DomainError("fit_t1_temperature_model: fixed constants must be positive");
    for (double s : sigma)
        if (!(s > 0.0)) throw DomainError("fit_t1_temperature_model: sigma must be > 0");

    TemperatureModel base = fixed;
    base.a1 = 0.0;
    double sw = 0.0, swy = 0.0;
    for (std::size_t i = 0; i < temps_k.size(); ++i) {
        const double w = 1.0 / (sigma[i] * sigma[i]);
        sw += w;
        swy += w * (inv_t1[i] - t1_rate(base, temps_k[i], boltzmann_ev_per_k));
    }
    const double a1 = swy / sw;

    double chi2 = 0.0;
    for (std::size_t i = 0; i < temps_k.size(); ++i) {
        const double model = a1 + t1_rate(base, temps_k[i], boltzmann_ev_per_k);
        const double r = (inv_t1[i] - model) / sigma[i];
        chi2 += r * r;
    }
    const std::size_t dof = temps_k.size() - 1;
    const double scale = std::max(1.0, chi2 / static_cast<double>(dof));

    FitResult fr;
    fr.params = {a1};
    fr.covariance = {{scale / sw}};
    fr.std_errors = {std::sqrt(scale / sw)};
    fr.chi_squared = chi2;
    fr.dof = dof;
    return fr;
}

}  // namespace nvrelax
