#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "nvrelax/fitting.hpp"

using namespace nvrelax;
using Catch::Approx;

namespace {

// Richardson-extrapolated central differences of a model function wrt its
// parameters (4th-order accurate).
void fd_gradient(const ModelFunc& f, double x, const std::vector<double>& p,
                 std::vector<double>& g, const std::vector<double>& step_scale) {
    g.assign(p.size(), 0.0);
    auto central = [&](size_t j, double h) {
        auto pp = p;
        pp[j] = p[j] + h;
        const double fp = f(x, pp);
        pp[j] = p[j] - h;
        const double fm = f(x, pp);
        return (fp - fm) / (2.0 * h);
    };
    for (size_t j = 0; j < p.size(); ++j) {
        const double scale = step_scale.empty() ? std::fabs(p[j]) : step_scale[j];
        const double h = 1e-4 * std::max(scale, 1e-6);
        g[j] = (4.0 * central(j, h) - central(j, 2.0 * h)) / 3.0;
    }
}

// Relative agreement is measured against the gradient's infinity norm so that
// components suppressed by cancellation do not demand impossible absolute
// accuracy from the finite-difference oracle.
void check_jacobian(const ModelFunc& f, const ModelGrad& df, double x,
                    const std::vector<double>& p, double tol,
                    const std::vector<double>& step_scale = {}) {
    std::vector<double> ga, gn;
    df(x, p, ga);
    fd_gradient(f, x, p, gn, step_scale);
    double norm = 0.0;
    for (double v : ga) norm = std::max(norm, std::fabs(v));
    for (size_t j = 0; j < p.size(); ++j) {
        const double scale = std::max({std::fabs(ga[j]), std::fabs(gn[j]), norm});
        INFO("param " << j << " analytic " << ga[j] << " fd " << gn[j]);
        REQUIRE(std::fabs(ga[j] - gn[j]) <= tol * scale);
    }
}

std::vector<double> logspace(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i)
        v[i] = lo * std::pow(hi / lo, double(i) / double(n - 1));
    return v;
}

}  // namespace

TEST_CASE("weighted_linear_fit: exact line with arbitrary weights", "[fitting]") {
    std::mt19937_64 rng(10);
    std::vector<double> x, y, s;
    for (int i = 0; i < 12; ++i) {
        x.push_back(0.3 * i);
        y.push_back(2.0 * x.back() + 1.0);
        s.push_back(testutil::uniform(rng, 1e-10, 5e-9));
    }
    const FitResult fr = weighted_linear_fit(x, y, s);
    CHECK(fr.params[0] == Approx(2.0).epsilon(1e-12));
    CHECK(fr.params[1] == Approx(1.0).epsilon(1e-12));
    CHECK(fr.std_errors[0] < 1e-8);
    CHECK(fr.std_errors[1] < 1e-8);
}

TEST_CASE("weighted_linear_fit: two points", "[fitting]") {
    const FitResult fr = weighted_linear_fit({0.0, 1.0}, {0.0, 1.0}, {1.0, 1.0});
    CHECK(fr.params[0] == Approx(1.0).epsilon(1e-14));
    CHECK(fr.params[1] == Approx(0.0).margin(1e-14));
    CHECK(fr.dof == 1);
}

TEST_CASE("weighted_linear_fit: heteroscedastic data matches the extended-precision oracle",
          "[fitting]") {
    std::mt19937_64 rng(11);
    std::vector<double> x, y, s;
    for (int i = 0; i < 40; ++i) {
        x.push_back(testutil::uniform(rng, -3.0, 7.0));
        y.push_back(1.7 * x.back() - 0.4 + testutil::uniform(rng, -0.3, 0.3));
        s.push_back(testutil::uniform(rng, 0.05, 2.0));
    }
    const FitResult fr = weighted_linear_fit(x, y, s);
    const auto oracle = testutil::weighted_linear_oracle(x, y, s);
    CHECK(fr.params[0] == Approx(double(oracle.slope)).epsilon(1e-10));
    CHECK(fr.params[1] == Approx(double(oracle.intercept)).epsilon(1e-10));
}

TEST_CASE("weighted_linear_fit: singular design is rejected", "[fitting]") {
    CHECK_THROWS_AS(weighted_linear_fit({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}),
                    SingularDesignError);
    CHECK_THROWS_AS(weighted_linear_fit({1.0}, {1.0}, {1.0}), InsufficientDataError);
    CHECK_THROWS_AS(weighted_linear_fit({1.0, 2.0}, {1.0, 2.0}, {1.0, 0.0}), DomainError);
}

TEST_CASE("weighted_linear_fit: estimates invariant under global sigma rescaling",
          "[fitting][property]") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> x, y, s, s2;
        for (int i = 0; i < 9; ++i) {
            x.push_back(testutil::uniform(rng, 0.0, 5.0) + 0.01 * i);
            y.push_back(testutil::uniform(rng, -2.0, 2.0));
            s.push_back(testutil::uniform(rng, 0.1, 3.0));
            s2.push_back(s.back() * 37.0);
        }
        const FitResult a = weighted_linear_fit(x, y, s);
        const FitResult b = weighted_linear_fit(x, y, s2);
        REQUIRE(a.params[0] == Approx(b.params[0]).epsilon(1e-12).margin(1e-12));
        REQUIRE(a.params[1] == Approx(b.params[1]).epsilon(1e-12).margin(1e-12));
        REQUIRE(b.chi_squared == Approx(a.chi_squared / (37.0 * 37.0)).epsilon(1e-10));
    }
}

TEST_CASE("fit_monoexp: exact data recovered to 1e-8", "[fitting]") {
    const auto t = logspace(1e-5, 1e-2, 30);
    std::vector<double> y, s(t.size(), 1.0);
    for (double ti : t) y.push_back(1.0 * std::exp(-ti / 1e-3) + 0.0);
    const FitResult fr = fit_monoexp(t, y, s);
    CHECK(fr.params[0] == Approx(1.0).epsilon(1e-8));
    CHECK(fr.params[1] == Approx(1e-3).epsilon(1e-8));
    CHECK(fr.params[2] == Approx(0.0).margin(1e-8));
}

TEST_CASE("fit_monoexp: rising transient (negative amplitude)", "[fitting]") {
    const auto t = logspace(1e-5, 1e-2, 25);
    std::vector<double> y, s(t.size(), 1.0);
    for (double ti : t) y.push_back(-0.4 * std::exp(-ti / 8e-4) + 2.0);
    const FitResult fr = fit_monoexp(t, y, s);
    CHECK(fr.params[0] == Approx(-0.4).epsilon(1e-7));
    CHECK(fr.params[1] == Approx(8e-4).epsilon(1e-7));
    CHECK(fr.params[2] == Approx(2.0).epsilon(1e-7));
}

TEST_CASE("fit_monoexp: constant data flags an unidentifiable time constant", "[fitting]") {
    std::vector<double> t{1e-4, 2e-4, 3e-4, 4e-4, 5e-4, 6e-4};
    std::vector<double> y(t.size(), 3.25), s(t.size(), 0.01);
    const FitResult fr = fit_monoexp(t, y, s);
    CHECK(std::fabs(fr.params[0]) < 1e-6);
    CHECK(fr.params[2] == Approx(3.25).epsilon(1e-9));
    const bool flagged = fr.std_errors[1] > 10.0 * std::fabs(fr.params[1]) ||
                         !fr.warnings.empty();
    CHECK(flagged);
}

TEST_CASE("fit_monoexp: translation covariance in t", "[fitting]") {
    const auto t = logspace(1e-4, 2e-2, 24);
    std::vector<double> y, s(t.size(), 1.0);
    for (double ti : t) y.push_back(0.7 * std::exp(-ti / 2e-3) + 0.1);
    const FitResult base = fit_monoexp(t, y, s);
    const double t0 = 5e-4;
    auto t_shift = t;
    for (double& ti : t_shift) ti += t0;
    const FitResult shifted = fit_monoexp(t_shift, y, s);
    CHECK(shifted.params[1] == Approx(base.params[1]).epsilon(1e-8));
    CHECK(shifted.params[2] == Approx(base.params[2]).margin(1e-8));
    CHECK(shifted.params[0] == Approx(base.params[0] * std::exp(t0 / base.params[1])).epsilon(1e-7));
}

TEST_CASE("fit_monoexp: input validation", "[fitting]") {
    std::vector<double> t{1.0, 2.0, 3.0};
    std::vector<double> y{1.0, 2.0, 3.0}, s{1.0, 1.0, 1.0};
    CHECK_THROWS_AS(fit_monoexp(t, y, s), InsufficientDataError);
    std::vector<double> t4{1.0, 2.0, 2.0, 3.0}, y4(4, 1.0), s4(4, 1.0);
    CHECK_THROWS_AS(fit_monoexp(t4, y4, s4), DomainError);
}

TEST_CASE("fit_biexp: noise-free parameters recovered to 1e-6", "[fitting]") {
    const auto t = logspace(1e-6, 3e-2, 40);
    std::vector<double> y, s(t.size(), 1.0);
    for (double ti : t)
        y.push_back(0.6 * std::exp(-ti / 50e-6) + 0.4 * std::exp(-ti / 2e-3) + 1.0);
    const FitResult fr = fit_biexp(t, y, s);
    CHECK(fr.params[0] == Approx(0.6).epsilon(1e-6));
    CHECK(fr.params[1] == Approx(50e-6).epsilon(1e-6));
    CHECK(fr.params[2] == Approx(0.4).epsilon(1e-6));
    CHECK(fr.params[3] == Approx(2e-3).epsilon(1e-6));
    CHECK(fr.params[4] == Approx(1.0).epsilon(1e-6));
    CHECK(fr.params[1] < fr.params[3]);
}

TEST_CASE("fit_biexp: monoexponential input flags a degenerate component", "[fitting]") {
    const auto t = logspace(1e-6, 3e-2, 30);
    std::vector<double> y, s(t.size(), 1.0);
    for (double ti : t) y.push_back(0.8 * std::exp(-ti / 3e-4) + 0.5);
    const FitResult fr = fit_biexp(t, y, s);
    // one component must carry the real time constant
    const bool t_in_1 = std::fabs(fr.params[1] - 3e-4) < 3e-4 * 1e-2;
    const bool t_in_2 = std::fabs(fr.params[3] - 3e-4) < 3e-4 * 1e-2;
    CHECK((t_in_1 || t_in_2));
    CHECK(!fr.warnings.empty());
}

TEST_CASE("fit_biexp: ordering convention T_R1 < T_R2 on randomized refits",
          "[fitting][property]") {
    std::mt19937_64 rng(13);
    const auto t = logspace(1e-6, 3e-2, 31);
    for (int trial = 0; trial < 200; ++trial) {
        const double t1v = testutil::uniform(rng, 5e-6, 3e-4);
        const double t2v = t1v * testutil::uniform(rng, 6.0, 60.0);
        const double a = testutil::uniform(rng, 0.2, 1.0);
        const double b = testutil::uniform(rng, 0.2, 1.0);
        const double c = testutil::uniform(rng, 0.0, 2.0);
        std::vector<double> y, s(t.size(), 1.0);
        for (double ti : t)
            y.push_back(a * std::exp(-ti / t1v) + b * std::exp(-ti / t2v) + c);
        const FitResult fr = fit_biexp(t, y, s);
        REQUIRE(fr.params[1] < fr.params[3]);
    }
}

TEST_CASE("fit_biexp: preconditions", "[fitting]") {
    std::vector<double> t{1e-6, 2e-6, 3e-6, 4e-6, 5e-6, 6e-6};  // 6 points
    std::vector<double> y(6, 1.0), s(6, 1.0);
    CHECK_THROWS_AS(fit_biexp(t, y, s), InsufficientDataError);
    // 7 points but narrow span
    std::vector<double> t7{1e-6, 2e-6, 3e-6, 4e-6, 5e-6, 6e-6, 7e-6}, y7(7, 1.0), s7(7, 1.0);
    CHECK_THROWS_AS(fit_biexp(t7, y7, s7), InsufficientDataError);
}

TEST_CASE("fit_power_law: linear data gives n = 1", "[fitting]") {
    std::vector<double> x{0.5, 1.0, 1.5, 2.0, 2.5, 3.0}, y, s(6, 1.0);
    for (double xi : x) y.push_back(3.0 * xi + 0.7);
    const FitResult fr = fit_power_law(x, y, s);
    CHECK(fr.params[0] == Approx(3.0).epsilon(1e-6));
    CHECK(fr.params[1] == Approx(1.0).epsilon(1e-6));
    CHECK(fr.params[2] == Approx(0.7).epsilon(1e-5));
}

TEST_CASE("fit_power_law: exact recovery of a = 2, n = 0.5, c = 0.3", "[fitting]") {
    std::vector<double> x, y, s;
    for (int i = 1; i <= 12; ++i) {
        x.push_back(0.25 * i);
        y.push_back(2.0 * std::pow(x.back(), 0.5) + 0.3);
        s.push_back(1.0);
    }
    const FitResult fr = fit_power_law(x, y, s);
    CHECK(fr.params[0] == Approx(2.0).epsilon(1e-6));
    CHECK(fr.params[1] == Approx(0.5).epsilon(1e-6));
    CHECK(fr.params[2] == Approx(0.3).epsilon(1e-5));
}

TEST_CASE("fit_power_law: monotone increasing over the data range when a, n > 0",
          "[fitting]") {
    std::vector<double> x{0.2, 0.6, 1.1, 1.9, 2.8, 4.0}, y, s(6, 1.0);
    for (double xi : x) y.push_back(1.3 * std::pow(xi, 1.7) + 0.1);
    const FitResult fr = fit_power_law(x, y, s);
    double prev = -1e300;
    for (double xi : x) {
        const double v = fr.params[0] * std::pow(xi, fr.params[1]) + fr.params[2];
        REQUIRE(v > prev);
        prev = v;
    }
    CHECK_THROWS_AS(fit_power_law({-1.0, 1.0, 2.0, 3.0}, {1, 1, 1, 1}, {1, 1, 1, 1}),
                    DomainError);
}

TEST_CASE("fit_t1_temperature_model: exact synthetic data returns a1 exactly", "[fitting]") {
    TemperatureModel truth;  // defaults with a1 = 657
    std::vector<double> temps{294, 302, 310, 317, 325, 333, 340, 348};
    std::vector<double> y, s(temps.size(), 1.0);
    for (double t : temps) y.push_back(t1_rate(truth, t));
    const FitResult fr = fit_t1_temperature_model(temps, y, s, truth);
    CHECK(fr.params[0] == Approx(657.0).epsilon(1e-12));
    CHECK(fr.chi_squared < 1e-15);
    CHECK(fr.dof == temps.size() - 1);
}

TEST_CASE("fit_t1_temperature_model: a2 = a3 = 0 reduces to the weighted mean", "[fitting]") {
    TemperatureModel zero{0.0, 0.0, 0.0, 0.073};
    std::vector<double> temps{300, 310, 320, 330};
    std::vector<double> y{800, 820, 790, 805}, s{1.0, 2.0, 0.5, 1.0};
    const FitResult fr = fit_t1_temperature_model(temps, y, s, zero);
    double sw = 0, swy = 0;
    for (size_t i = 0; i < y.size(); ++i) {
        sw += 1.0 / (s[i] * s[i]);
        swy += y[i] / (s[i] * s[i]);
    }
    CHECK(fr.params[0] == Approx(swy / sw).epsilon(1e-14));
}

TEST_CASE("analytic Jacobians match central differences at 100 random points",
          "[fitting][jacobian]") {
    std::mt19937_64 rng(14);
    const double tol = 1e-6;

    for (int i = 0; i < 100; ++i) {
        // monoexp
        {
            std::vector<double> p{testutil::uniform(rng, -2.0, 2.0),
                                  testutil::uniform(rng, 1e-4, 1e-2),
                                  testutil::uniform(rng, -1.0, 1.0)};
            const double x = testutil::uniform(rng, 1e-5, 3e-2);
            check_jacobian(models::monoexp, models::monoexp_grad, x, p, tol);
        }
        // biexp
        {
            std::vector<double> p{testutil::uniform(rng, -1.0, 1.0),
                                  testutil::uniform(rng, 1e-5, 1e-3),
                                  testutil::uniform(rng, -1.0, 1.0),
                                  testutil::uniform(rng, 1e-3, 1e-1),
                                  testutil::uniform(rng, -1.0, 1.0)};
            const double x = testutil::uniform(rng, 1e-6, 3e-2);
            check_jacobian(models::biexp, models::biexp_grad, x, p, tol);
        }
        // power law
        {
            std::vector<double> p{testutil::uniform(rng, 0.1, 3.0),
                                  testutil::uniform(rng, 0.2, 4.5),
                                  testutil::uniform(rng, -1.0, 1.0)};
            const double x = testutil::uniform(rng, 0.1, 5.0);
            check_jacobian(models::power_law, models::power_law_grad, x, p, tol);
        }
        // Lorentzian on linear baseline
        {
            const double x_ref = 640.0;
            std::vector<double> p{testutil::uniform(rng, 0.1, 100.0),
                                  testutil::uniform(rng, 632.0, 648.0),
                                  testutil::uniform(rng, 0.5, 10.0),
                                  testutil::uniform(rng, -5.0, 5.0),
                                  testutil::uniform(rng, -2.0, 2.0)};
            const double x = testutil::uniform(rng, 630.0, 650.0);
            auto f = [x_ref](double xx, const std::vector<double>& pp) {
                return models::lorentz_linear(xx, pp, x_ref);
            };
            auto df = [x_ref](double xx, const std::vector<double>& pp,
                              std::vector<double>& g) {
                models::lorentz_linear_grad(xx, pp, x_ref, g);
            };
            // the natural length scale for the center and width is the width
            check_jacobian(f, df, x, p, tol, {p[0], p[2], p[2], 1.0, 1.0});
        }
    }
}

TEST_CASE("fit_least_squares: non-convergence raises FitError with diagnostics", "[fitting]") {
    const auto t = logspace(1e-5, 1e-2, 20);
    std::vector<double> y, s(t.size(), 1.0);
    for (double ti : t) y.push_back(1.0 * std::exp(-ti / 1e-3));
    ModelSpec spec;
    spec.model_id = "monoexp";
    spec.f = models::monoexp;
    spec.df = models::monoexp_grad;
    spec.initial = {5.0, 3e-2, -2.0};  // far from the solution
    spec.max_iterations = 1;
    try {
        fit_least_squares(spec, t, y, s);
        FAIL("expected FitError");
    } catch (const FitError& e) {
        CHECK(e.iterations >= 1);
        CHECK(e.last_cost > 0.0);
    }
}

TEST_CASE("fit_least_squares: box bounds are honored", "[fitting]") {
    // data generated with n = 7, fit bounded to n <= 5
    std::vector<double> x, y, s;
    for (int i = 1; i <= 10; ++i) {
        x.push_back(0.3 * i);
        y.push_back(0.5 * std::pow(x.back(), 7.0) + 0.1);
        s.push_back(1.0);
    }
    const FitResult fr = fit_power_law(x, y, s);
    CHECK(fr.params[1] <= 5.0 + 1e-12);
}
