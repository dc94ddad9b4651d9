#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nvrelax/nvrelax.hpp"

using namespace nvrelax;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(NVRELAX_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("nvrelax_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::string kConfig = std::string(NVRELAX_SOURCE_DIR) + "/configs/default.cfg";

}  // namespace

TEST_CASE("format_double: shortest round-trip representation", "[io]") {
    for (double v : {0.0, 1.0, -74.2e3, 8e-06, 0.1 + 0.2, 1.7976931348623157e308}) {
        const std::string s = format_double(v);
        CHECK(parse_double(s, "t") == v);
    }
}

TEST_CASE("spectrum files round trip", "[io]") {
    const fs::path dir = fresh_dir("spec_io");
    SynthParams sp;
    sp.grid_points = 201;
    PhysicsConfig phys;
    RngEngine rng = make_engine(5);
    const auto grid = make_wavelength_grid(sp);
    const Spectrum s = simulate_map_spectrum(grid, 8e-6, 310.5, phys, sp, rng, true);

    RunManifest m;
    m.command = "test";
    SpectrumFileMeta meta;
    meta.series = "map";
    write_spectrum_file((dir / "s.tsv").string(), s, m, meta);
    const SpectrumFile back = read_spectrum_file((dir / "s.tsv").string());
    CHECK(back.spectrum.wavelengths_nm == s.wavelengths_nm);
    CHECK(back.spectrum.intensities == s.intensities);
    CHECK(back.spectrum.laser_power_w == s.laser_power_w);
    CHECK(back.spectrum.temperature_k == s.temperature_k);
    CHECK(back.spectrum.exposure_s == s.exposure_s);
    CHECK(back.meta.series == "map");
}

TEST_CASE("sequence files parse, validate and round trip", "[io]") {
    const PulseSequence seq =
        load_sequence_file(std::string(NVRELAX_SOURCE_DIR) + "/configs/t1_8uW.seq");
    CHECK(seq.repetitions == 50000);
    CHECK(seq.pause_s == Approx(1e-3));
    CHECK(seq.tau_sweep_s.size() == 40);
    CHECK(seq.has_pi());
    CHECK(seq.readout_power_w() == Approx(8e-6));

    const PulseSequence back = parse_sequence_text(sequence_to_text(seq));
    CHECK(back.tau_sweep_s == seq.tau_sweep_s);
    CHECK(back.segments.size() == seq.segments.size());

    CHECK_THROWS_AS(parse_sequence_text("taus 1e-6\nREAD signal 5e-6\n"), ParseError);
    CHECK_THROWS_AS(parse_sequence_text("taus 1e-6\nWAIT 1e-3\n"), ParseError);
    // tau sweep missing entirely
    CHECK_THROWS_AS(parse_sequence_text("LASER 1e-6 1e-3\nREAD signal 1e-3\nDARK tau\n"),
                    ParseError);
}

TEST_CASE("trace files round trip", "[io]") {
    const fs::path dir = fresh_dir("trace_io");
    SequenceModel model;
    PulseSequence seq;
    seq.repetitions = 50;
    seq.pause_s = 1e-3;
    seq.tau_sweep_s = {1e-6, 1e-4, 1e-2};
    seq.segments.push_back(LaserSegment{8e-6, 200e-6, {}});
    seq.segments.push_back(DarkSegment{1e-6, false});
    seq.segments.push_back(LaserSegment{8e-6, 5e-6, {{Window::normalization, 5e-6}}});
    seq.segments.push_back(DarkSegment{0.0, true});
    seq.segments.push_back(PiSegment{});
    seq.segments.push_back(LaserSegment{8e-6, 5e-6, {{Window::signal, 5e-6}}});
    const RelaxometryTrace t = run_sequence(seq, model, 294.0, 9);

    RunManifest m;
    m.command = "test";
    write_trace_file((dir / "t.tsv").string(), t, m);
    const RelaxometryTrace back = read_trace_file((dir / "t.tsv").string());
    REQUIRE(back.cells.size() == t.cells.size());
    for (size_t i = 0; i < t.cells.size(); ++i) {
        CHECK(back.cells[i].mean == t.cells[i].mean);
        CHECK(back.cells[i].std_dev == t.cells[i].std_dev);
    }
    CHECK(back.tau_s == t.tau_s);
    CHECK(back.repetitions == t.repetitions);
    CHECK(back.has_with_pi == t.has_with_pi);
}

TEST_CASE("mapping JSON round trips through files", "[io]") {
    const fs::path dir = fresh_dir("map_io");
    std::vector<ValueWithError> charge, counts;
    for (double x : {0.4, 0.8, 1.2, 1.6, 2.0}) {
        charge.push_back({0.9 * x + 0.05, 0.01});
        counts.push_back({x, 0.01});
    }
    const ChargeRatioMapping m = calibrate_charge_ratio_mapping(charge, counts);
    write_json_file((dir / "m.json").string(), mapping_to_json(m, 294.0));
    const ChargeRatioMapping back =
        mapping_from_json(read_json_file((dir / "m.json").string()), "m.json");
    CHECK(back.a == m.a);
    CHECK(back.n == m.n);
    CHECK(back.c == m.c);
    CHECK(back.ratio_min == m.ratio_min);
    CHECK(back.map_with_error(1.0, 0.01).error ==
          Approx(m.map_with_error(1.0, 0.01).error));
}

TEST_CASE("cli: full chain runs with expected outputs and exit codes", "[cli]") {
    const fs::path dir = fresh_dir("cli_chain");
    const std::string base = " --config " + kConfig + " --seed 42 ";

    REQUIRE(run_cli("simulate-spectra" + base + "--out " + (dir / "spec").string() +
                    " --temps 294,330") == 0);
    REQUIRE(run_cli("decompose" + base + "--spectra " + (dir / "spec").string() + " --out " +
                    (dir / "ana").string()) == 0);
    REQUIRE(fs::exists(dir / "ana/fractions.tsv"));
    REQUIRE(fs::exists(dir / "ana/kappa.tsv"));
    REQUIRE(fs::exists(dir / "ana/variance.tsv"));
    REQUIRE(fs::exists(dir / "ana/basis_T294_minus.tsv"));

    REQUIRE(run_cli("calibrate-mapping" + base + "--fractions " +
                    (dir / "ana/fractions.tsv").string() + " --out " +
                    (dir / "mapping.json").string()) == 0);

    // small, fast sequence for the scan
    {
        std::ofstream seq(dir / "seq.txt");
        seq << "repetitions 400\nsweeps 1\npause 1e-3\ntau_log 1e-6 3e-2 12\n"
               "LASER 5.6e-4 200e-6\nDARK 1e-6\nLASER 5.6e-4 5e-6\nREAD normalization 5e-6\n"
               "DARK tau\nPI\nLASER 5.6e-4 5e-6\nREAD signal 5e-6\n";
    }
    REQUIRE(run_cli("relaxometry" + base + "--sequence " + (dir / "seq.txt").string() +
                    " --temps 294,330 --no-pi --calibration " +
                    (dir / "mapping.json").string() + " --out " + (dir / "rel").string()) ==
            0);
    CHECK(fs::exists(dir / "rel/scan.tsv"));
    CHECK(fs::exists(dir / "rel/scan.json"));
    CHECK(fs::exists(dir / "rel/ratio_stat.tsv"));
    CHECK(fs::exists(dir / "rel/trace_T294.tsv"));
    CHECK(fs::exists(dir / "rel/decay_recharge_T330.tsv"));
    // --no-pi: no pi decay files, recharge flatness present
    CHECK_FALSE(fs::exists(dir / "rel/decay_pi_T294.tsv"));
    CHECK(fs::exists(dir / "rel/recharge_flatness.json"));
}

TEST_CASE("cli: outputs are byte-identical across reruns with the same seed", "[cli]") {
    const fs::path dir = fresh_dir("cli_bytes");
    const std::string invocation = "simulate-spectra --config " + kConfig +
                                   " --seed 77 --temps 294,348 --out " + (dir / "a").string();
    REQUIRE(run_cli(invocation) == 0);
    std::map<std::string, std::string> first;
    for (const auto& entry : fs::directory_iterator(dir / "a"))
        first[entry.path().filename().string()] = slurp(entry.path());
    fs::remove_all(dir / "a");
    REQUIRE(run_cli(invocation) == 0);
    size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        REQUIRE(first.count(entry.path().filename().string()) == 1);
        REQUIRE(slurp(entry.path()) == first[entry.path().filename().string()]);
        ++compared;
    }
    CHECK(compared == first.size());
    CHECK(compared > 0);
}

TEST_CASE("cli: validation failures exit 1 before any output is written", "[cli]") {
    const fs::path dir = fresh_dir("cli_validate");
    const std::string out = (dir / "out").string();

    // power outside the advisory range
    CHECK(run_cli("simulate-spectra --config " + kConfig + " --seed 1 --out " + out +
                  " --powers 5e-3") == 1);
    CHECK_FALSE(fs::exists(dir / "out"));

    // malformed sequence file
    {
        std::ofstream seq(dir / "bad.seq");
        seq << "taus 1e-6,1e-5\nREAD signal 5e-6\n";
    }
    CHECK(run_cli("relaxometry --config " + kConfig + " --seed 1 --sequence " +
                  (dir / "bad.seq").string() + " --temps 294,300 --out " + out) == 1);
    CHECK_FALSE(fs::exists(dir / "out"));

    // unknown config key
    {
        std::ofstream cfg(dir / "bad.cfg");
        cfg << "[physics]\nkapppa_520 = 1.65\n";
    }
    CHECK(run_cli("simulate-spectra --config " + (dir / "bad.cfg").string() + " --seed 1 --out " +
                  out + " --temps 294,300") == 1);
    CHECK_FALSE(fs::exists(dir / "out"));

    // missing references: calibration-only directory
    {
        fs::create_directories(dir / "calonly");
        SynthParams sp;
        sp.grid_points = 101;
        PhysicsConfig phys;
        RunManifest m;
        m.command = "test";
        const auto grid = make_wavelength_grid(sp);
        for (double p : {2e-6, 4e-6, 6e-6}) {
            RngEngine rng = make_engine(3, static_cast<uint64_t>(p * 1e9));
            SpectrumFileMeta meta;
            meta.series = "calibration";
            write_spectrum_file((dir / "calonly" / ("c" + format_double(p) + ".tsv")).string(),
                                simulate_calibration_spectrum(grid, p, 294.0, phys, sp, rng),
                                m, meta);
        }
        CHECK(run_cli("decompose --config " + kConfig + " --seed 1 --spectra " +
                      (dir / "calonly").string() + " --out " + out) == 1);
        CHECK_FALSE(fs::exists(dir / "out"));
    }
}

TEST_CASE("cli: decompose reports c_minus = 1 for a pure-basis spectrum", "[cli]") {
    const fs::path dir = fresh_dir("cli_pure");
    // hand-built dataset: map series of two pure-component spectra plus a
    // minimal ratio-locked calibration series
    SynthParams sp;
    sp.grid_points = 301;
    sp.grid_chirp = 0.0;
    const auto grid = make_wavelength_grid(sp);
    const auto pure_m = true_lineshape(SpectralComponent::nv_minus, 294.0, grid, sp);
    const auto pure_z = true_lineshape(SpectralComponent::nv_zero, 294.0, grid, sp);
    fs::create_directories(dir / "spec");
    RunManifest m;
    m.command = "test";

    auto emit = [&](const std::string& name, const std::vector<double>& shape, double power,
                    double scale, const std::string& series) {
        Spectrum s;
        s.wavelengths_nm = grid;
        s.intensities = shape;
        for (double& v : s.intensities) v *= scale;
        s.laser_power_w = power;
        s.temperature_k = 294.0;
        s.exposure_s = 1.0;
        SpectrumFileMeta meta;
        meta.series = series;
        write_spectrum_file((dir / "spec" / name).string(), s, m, meta);
    };
    emit("low.tsv", pure_m, 8e-6, 1000.0, "map");   // pure NV-  -> I_-^pre reference
    emit("high.tsv", pure_z, 4e-3, 9000.0, "map");  // pure NV0 -> I_0^pre reference
    for (double p : {2e-6, 4e-6, 6e-6}) {
        std::vector<double> mixv(grid.size());
        for (size_t i = 0; i < grid.size(); ++i)
            mixv[i] = 1.65 * pure_m[i] + pure_z[i];
        emit("cal" + format_double(p) + ".tsv", mixv, p, 500.0 * p / 1e-6, "calibration");
    }
    REQUIRE(run_cli("decompose --config " + kConfig + " --seed 1 --spectra " +
                    (dir / "spec").string() + " --out " + (dir / "ana").string()) == 0);
    // find the 8 uW row: columns T P c_minus c_zero c_sigma F F_err
    std::istringstream table(slurp(dir / "ana/fractions.tsv"));
    std::string line;
    bool found = false;
    while (std::getline(table, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        double T, P, cm, cz;
        row >> T >> P >> cm >> cz;
        if (std::fabs(P - 8e-6) < 1e-12) {
            CHECK(cm == Approx(1.0).margin(1e-9));
            CHECK(cz == Approx(0.0).margin(1e-9));
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("cli: odmr-temp computes temperatures with propagated errors", "[cli]") {
    const fs::path dir = fresh_dir("cli_odmr");
    {
        std::ofstream in(dir / "rows.txt");
        in << "# d_hz sigma_hz rows and one resonance pair\n";
        in << "2.870e9 0\n";                    // at reference -> 294 K
        in << format_double(2.870e9 - 74.2e3) << " 20e3\n";  // +1 K
        in << "2.80e9 2.94e9 15e3\n";           // pair averaging to 2.87 GHz
        in << format_double(2.870e9 - 4.0e6) << " 0\n";      // +53.908 K
    }
    REQUIRE(run_cli("odmr-temp --config " + kConfig + " --input " + (dir / "rows.txt").string() +
                    " --out " + (dir / "temps.tsv").string()) == 0);
    std::istringstream table(slurp(dir / "temps.tsv"));
    std::string line;
    std::vector<double> temps, errs;
    while (std::getline(table, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        double d, de, t, te;
        row >> d >> de >> t >> te;
        temps.push_back(t);
        errs.push_back(te);
    }
    REQUIRE(temps.size() == 4);  // order preserved
    CHECK(temps[0] == Approx(294.0));
    CHECK(temps[1] == Approx(295.0));
    CHECK(temps[2] == Approx(294.0));
    CHECK(temps[3] == Approx(294.0 + 53.908355795148248));
    CHECK(errs[0] == 0.0);
    CHECK(errs[1] > 0.0);

    // malformed row reported with its line number, nothing written
    {
        std::ofstream in(dir / "bad.txt");
        in << "2.87e9 0\nnot_a_number 5\n";
    }
    CHECK(run_cli("odmr-temp --config " + kConfig + " --input " + (dir / "bad.txt").string() +
                  " --out " + (dir / "nope.tsv").string()) == 1);
    CHECK_FALSE(fs::exists(dir / "nope.tsv"));
}

TEST_CASE("cli: a single power and temperature produce a single map file", "[cli]") {
    const fs::path dir = fresh_dir("cli_single");
    REQUIRE(run_cli("simulate-spectra --config " + kConfig + " --seed 3 --out " +
                    (dir / "one").string() + " --temps 294 --powers 8e-6 --cal-powers 2e-6") ==
            0);
    size_t n_map = 0, n_cal = 0;
    for (const auto& entry : fs::directory_iterator(dir / "one")) {
        const SpectrumFile f = read_spectrum_file(entry.path().string());
        (f.meta.series == "map" ? n_map : n_cal) += 1;
    }
    CHECK(n_map == 1);
    CHECK(n_cal == 1);
}

TEST_CASE("cli: --power overrides every laser segment of the sequence", "[cli]") {
    const fs::path dir = fresh_dir("cli_power");
    {
        std::ofstream seq(dir / "seq.txt");
        seq << "repetitions 300\nsweeps 1\npause 1e-3\ntau_log 1e-6 3e-2 10\n"
               "LASER 8e-6 200e-6\nDARK 1e-6\nLASER 8e-6 5e-6\nREAD normalization 5e-6\n"
               "DARK tau\nLASER 8e-6 5e-6\nREAD signal 5e-6\n";
    }
    REQUIRE(run_cli("relaxometry --config " + kConfig + " --seed 5 --sequence " +
                    (dir / "seq.txt").string() + " --temps 294,330 --power 5.6e-4 --out " +
                    (dir / "rel").string()) == 0);
    const RelaxometryTrace t = read_trace_file((dir / "rel/trace_T294.tsv").string());
    CHECK(t.laser_power_w == Approx(5.6e-4));
}

TEST_CASE("sequence parser: READ separated from its LASER is rejected", "[io]") {
    CHECK_THROWS_AS(
        parse_sequence_text("taus 1e-6\nLASER 8e-6 5e-6\nDARK tau\nREAD signal 5e-6\n"),
        ParseError);
    // directly adjacent is fine
    CHECK_NOTHROW(parse_sequence_text(
        "taus 1e-6,1e-5\nLASER 8e-6 200e-6\nDARK 1e-6\nLASER 8e-6 5e-6\n"
        "READ normalization 5e-6\nDARK tau\nLASER 8e-6 5e-6\nREAD signal 5e-6\n"));
}
