#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "nvrelax/pipeline.hpp"
#include "nvrelax/synth.hpp"

using namespace nvrelax;
using Catch::Approx;

TEST_CASE("wavelength grid covers [550, 775] nm, ascending, chirped", "[synth]") {
    SynthParams sp;
    const auto grid = make_wavelength_grid(sp);
    REQUIRE(grid.size() == 901);
    CHECK(grid.front() == Approx(550.0));
    CHECK(grid.back() == Approx(775.0));
    double min_step = 1e9, max_step = 0.0;
    for (size_t i = 1; i < grid.size(); ++i) {
        const double d = grid[i] - grid[i - 1];
        REQUIRE(d > 0.0);
        min_step = std::min(min_step, d);
        max_step = std::max(max_step, d);
    }
    CHECK(max_step / min_step > 1.05);  // genuinely non-uniform
}

TEST_CASE("component lineshapes are nonnegative with unit area", "[synth]") {
    SynthParams sp;
    const auto grid = make_wavelength_grid(sp);
    for (double t : {294.0, 320.0, 348.0}) {
        for (auto comp : {SpectralComponent::nv_minus, SpectralComponent::nv_zero}) {
            const auto v = true_lineshape(comp, t, grid, sp);
            for (double x : v) REQUIRE(x >= 0.0);
            CHECK(trapezoid(grid, v) == Approx(1.0).margin(1e-12));
        }
    }
}

TEST_CASE("noise-free map spectrum decomposes to the charge steady state", "[synth]") {
    SynthParams sp;
    PhysicsConfig phys;
    const auto grid = make_wavelength_grid(sp);
    RngEngine rng = make_engine(1);
    for (double power : {8e-6, 5.6e-4, 4e-3}) {
        const Spectrum s = simulate_map_spectrum(grid, power, 294.0, phys, sp, rng, false);
        BasisSet basis;
        basis.wavelength_grid = grid;
        basis.basis_minus = true_lineshape(SpectralComponent::nv_minus, 294.0, grid, sp);
        basis.basis_zero = true_lineshape(SpectralComponent::nv_zero, 294.0, grid, sp);
        const Decomposition dec = decompose(s, basis);
        const double f = nv_minus_fraction(dec, phys.kappa_lambda).value;
        REQUIRE(f == Approx(steady_state_fraction(power, phys.emission)).margin(1e-6));
    }
}

TEST_CASE("calibration spectra are ratio-locked to kappa", "[synth]") {
    SynthParams sp;
    PhysicsConfig phys;
    const auto grid = make_wavelength_grid(sp);
    RngEngine rng = make_engine(2);
    const Spectrum s = simulate_calibration_spectrum(grid, 8e-6, 294.0, phys, sp, rng, false);
    BasisSet basis;
    basis.wavelength_grid = grid;
    basis.basis_minus = true_lineshape(SpectralComponent::nv_minus, 294.0, grid, sp);
    basis.basis_zero = true_lineshape(SpectralComponent::nv_zero, 294.0, grid, sp);
    const Decomposition dec = decompose(s, basis);
    CHECK(dec.weight_minus() / dec.weight_zero() == Approx(1.65).epsilon(1e-9));
}

TEST_CASE("exposure follows the target-count rule with clamps", "[synth]") {
    SynthParams sp;  // target 2e7 counts, rate 2.5e11 cps/W
    PhysicsConfig phys;
    const auto grid = make_wavelength_grid(sp);
    RngEngine rng = make_engine(3);
    const Spectrum low = simulate_map_spectrum(grid, 2e-6, 294.0, phys, sp, rng, false);
    CHECK(low.exposure_s == Approx(10.0));  // clamped at the maximum
    const Spectrum mid = simulate_map_spectrum(grid, 8e-6, 294.0, phys, sp, rng, false);
    CHECK(mid.exposure_s == Approx(2e7 / (2.5e11 * 8e-6)));
    const Spectrum hot = simulate_map_spectrum(grid, 4e-3, 294.0, phys, sp, rng, false);
    CHECK(hot.exposure_s == Approx(2e7 / (2.5e11 * 4e-3)));
}

TEST_CASE("programmed ZPL trends show up in the fitted centers and widths", "[synth]") {
    SynthParams sp;
    PhysicsConfig phys;
    const auto grid = make_wavelength_grid(sp);
    RngEngine rng = make_engine(4);
    double prev_center = 0.0, prev_fwhm = 0.0;
    for (int i = 0; i < 8; ++i) {
        const double temp = 294.0 + 54.0 * i / 7.0;
        const Spectrum s = simulate_map_spectrum(grid, 8e-6, temp, phys, sp, rng, false);
        const ZplFit z = fit_zpl(s, 631.0, 647.0, SpectralComponent::nv_minus);
        if (i > 0) {
            REQUIRE(z.center_nm > prev_center);
            REQUIRE(z.fwhm_nm > prev_fwhm);
        }
        // +0.1 nm per 10 K programmed trend
        CHECK(z.center_nm == Approx(639.0 + 0.010 * (temp - 294.0)).margin(0.05));
        prev_center = z.center_nm;
        prev_fwhm = z.fwhm_nm;
    }
}

TEST_CASE("dataset simulation is deterministic in the seed", "[synth]") {
    SynthParams sp;
    sp.grid_points = 301;
    PhysicsConfig phys;
    const auto temps = std::vector<double>{294.0, 321.0};
    const auto ds1 = simulate_spectra_dataset(phys, sp, temps, {8e-6, 4e-3}, {2e-6, 4e-6, 6e-6},
                                              777, true);
    const auto ds2 = simulate_spectra_dataset(phys, sp, temps, {8e-6, 4e-3}, {2e-6, 4e-6, 6e-6},
                                              777, true);
    const auto ds3 = simulate_spectra_dataset(phys, sp, temps, {8e-6, 4e-3}, {2e-6, 4e-6, 6e-6},
                                              778, true);
    CHECK(ds1.map_spectra[1][0].intensities == ds2.map_spectra[1][0].intensities);
    CHECK(ds1.cal_spectra[0][2].intensities == ds2.cal_spectra[0][2].intensities);
    CHECK(ds1.map_spectra[1][0].intensities != ds3.map_spectra[1][0].intensities);
}

TEST_CASE("decompose pipeline: kappa, fractions and variance on a small dataset", "[synth]") {
    SynthParams sp;
    PhysicsConfig phys;
    const std::vector<double> temps{294.0, 316.0, 348.0};
    const SpectraDataset ds = simulate_spectra_dataset(
        phys, sp, temps, default_map_powers(), default_cal_powers(), 20250, true);
    const DecomposeOutput out = run_decompose_pipeline(ds);

    REQUIRE(out.kappas.size() == 3);
    for (const auto& k : out.kappas) {
        INFO("kappa " << k.kappa << " +- " << k.std_error);
        CHECK(std::fabs(k.kappa - 1.65) < 0.03 * 1.65);
    }
    // fraction anchors at 8 uW and 4 mW
    for (size_t ti = 0; ti < temps.size(); ++ti) {
        CHECK(out.fractions[ti].front().fraction.value > 0.60);
        CHECK(std::fabs(out.fractions[ti].back().fraction.value - 0.20) < 0.03);
    }
    for (double v : out.variance_per_power) CHECK(v <= 1e-5);
    // deltas land near the construction values for these references
    CHECK(out.delta0 > 0.0);
    CHECK(out.delta0 < 0.5);
    CHECK(out.delta_minus > 0.0);
}

TEST_CASE("mapping calibration pipeline feeds the ratio statistic", "[synth]") {
    SynthParams sp;
    PhysicsConfig phys;
    DetectorConfig det;
    const std::vector<double> temps{294.0, 348.0};
    const SpectraDataset ds = simulate_spectra_dataset(
        phys, sp, temps, default_map_powers(), default_cal_powers(), 808, true);
    const DecomposeOutput dec = run_decompose_pipeline(ds);
    const MappingCalibration cal = calibrate_mapping_pipeline(dec, phys, det, 808);
    REQUIRE(cal.mappings.size() == 2);
    CHECK_NOTHROW(cal.at_temperature(294.0));
    CHECK_THROWS_AS(cal.at_temperature(300.0), CalibrationError);
    for (const auto& m : cal.mappings) {
        CHECK(m.a > 0.0);
        CHECK(m.ratio_min < m.ratio_max);
    }
}
