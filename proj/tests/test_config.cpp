#include <catch2/catch_amalgamated.hpp>

#include "nvrelax/config.hpp"
#include "nvrelax/synth.hpp"

using namespace nvrelax;
using Catch::Approx;

TEST_CASE("config: sections and key = value pairs parse", "[config]") {
    const auto cfg = ConfigFile::from_string(
        "# comment\n"
        "[physics]\n"
        "kappa_520 = 1.7   # trailing comment\n"
        "[t1_model]\n"
        "a1_per_s = 700\n");
    PhysicsConfig p = parse_physics_config(cfg);
    CHECK(p.kappa_lambda == Approx(1.7));
    CHECK(p.t1_model.a1 == Approx(700.0));
    // untouched keys fall back to defaults
    CHECK(p.t1_model.a2 == Approx(2.1e3));
    CHECK_NOTHROW(cfg.require_fully_consumed());
}

TEST_CASE("config: bad number names the offending key", "[config]") {
    const auto cfg = ConfigFile::from_string("[physics]\nkappa_520 = abc\n");
    try {
        parse_physics_config(cfg);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("physics.kappa_520") != std::string::npos);
    }
}

TEST_CASE("config: unknown key is reported by name", "[config]") {
    const auto cfg = ConfigFile::from_string("[physics]\nkappa_52 = 1.6\n");
    parse_physics_config(cfg);
    try {
        cfg.require_fully_consumed();
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("physics.kappa_52") != std::string::npos);
    }
}

TEST_CASE("config: malformed lines are rejected with location", "[config]") {
    CHECK_THROWS_AS(ConfigFile::from_string("[physics\n"), ParseError);
    CHECK_THROWS_AS(ConfigFile::from_string("[x]\nno_equals_sign\n"), ParseError);
}

TEST_CASE("config: invariants are enforced after parsing", "[config]") {
    // positive ZFS slope violates the model
    const auto cfg =
        ConfigFile::from_string("[thermometry]\nzfs_slope_hz_per_k = 74.2e3\n");
    CHECK_THROWS_AS(parse_physics_config(cfg), DomainError);

    const auto cfg2 = ConfigFile::from_string("[emission]\nf_low = 0.1\n");  // < f_high
    CHECK_THROWS_AS(parse_physics_config(cfg2), DomainError);
}

TEST_CASE("config: freeze_charge hook pushes charge dynamics to infinity", "[config]") {
    auto cfg = ConfigFile::from_string("[physics]\nfreeze_charge = true\n");
    PhysicsConfig p = parse_physics_config(cfg);
    DetectorConfig det;
    SequenceModel m = make_sequence_model(p, det);
    CHECK(m.recharge.t_r1 == Approx(1e30));
    CHECK(m.emission.t_charge_unit == Approx(1e30));
    // decay factors round to exactly one for any realistic dt
    CHECK(std::exp(-3e-2 / m.recharge.t_r1) == 1.0);
}

TEST_CASE("config: defaults round-trip through the shipped file", "[config]") {
    const auto cfg = ConfigFile::from_file(std::string(NVRELAX_SOURCE_DIR) +
                                           "/configs/default.cfg");
    PhysicsConfig p = parse_physics_config(cfg);
    DetectorConfig d = parse_detector_config(cfg);
    SynthParams synth = parse_synth_params(cfg);
    CHECK(synth.grid_points == 901);
    CHECK_NOTHROW(cfg.require_fully_consumed());
    // the shipped file must encode the built-in defaults
    PhysicsConfig ref;
    CHECK(p.kappa_lambda == Approx(ref.kappa_lambda));
    CHECK(p.zfs_slope == Approx(ref.zfs_slope));
    CHECK(p.t1_model.a1 == Approx(ref.t1_model.a1));
    CHECK(p.t1_model.a2 == Approx(ref.t1_model.a2));
    CHECK(p.t1_model.a3 == Approx(ref.t1_model.a3));
    CHECK(p.t1_model.delta == Approx(ref.t1_model.delta));
    CHECK(p.recharge.t_r1 == Approx(ref.recharge.t_r1));
    CHECK(p.recharge.t_r2 == Approx(ref.recharge.t_r2));
    CHECK(p.emission.f_low == Approx(ref.emission.f_low));
    CHECK(d.saturation_rate > 0.0);
}
