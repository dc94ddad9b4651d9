// nvrelax command-line front end: dataset generation, decomposition,
// mapping calibration, relaxometry scans and ODMR thermometry.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nvrelax/nvrelax.hpp"

namespace fs = std::filesystem;
using namespace nvrelax;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitPartial = 3;

std::vector<double> parse_list(const std::string& csv, const std::string& what) {
    std::vector<double> out;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ','))
        if (!tok.empty()) out.push_back(parse_double(tok, what));
    if (out.empty()) throw ParseError(what + ": empty list");
    return out;
}

struct CommonOptions {
    std::string config_path;
    std::string out;
    std::uint64_t seed = 12345;
};

struct LoadedConfig {
    ConfigFile file;
    PhysicsConfig physics;
    DetectorConfig detector;
    SynthParams synth;
};

LoadedConfig load_config(const std::string& path) {
    LoadedConfig lc;
    if (!path.empty()) lc.file = ConfigFile::from_file(path);
    lc.physics = parse_physics_config(lc.file);
    lc.detector = parse_detector_config(lc.file);
    lc.synth = parse_synth_params(lc.file);
    lc.file.require_fully_consumed();
    return lc;
}

RunManifest make_manifest(const std::string& command, const CommonOptions& opts,
                          const std::string& inputs = "-") {
    RunManifest m;
    m.command = command;
    m.config_path = opts.config_path.empty() ? "<defaults>" : opts.config_path;
    m.inputs = inputs;
    m.outputs = opts.out.empty() ? "-" : opts.out;
    m.seed = opts.seed;
    return m;
}

std::string temp_tag(double t) { return format_double(t); }

// ---------------------------------------------------------------------------
// simulate-spectra
// ---------------------------------------------------------------------------

int cmd_simulate_spectra(const CommonOptions& opts, const std::string& temps_csv,
                         const std::string& powers_csv, const std::string& cal_powers_csv,
                         bool no_noise) {
    const LoadedConfig cfg = load_config(opts.config_path);
    const std::vector<double> temps =
        temps_csv.empty() ? default_temperatures() : parse_list(temps_csv, "--temps");
    const std::vector<double> powers =
        powers_csv.empty() ? default_map_powers() : parse_list(powers_csv, "--powers");
    const std::vector<double> cal_powers = cal_powers_csv.empty()
                                               ? default_cal_powers()
                                               : parse_list(cal_powers_csv, "--cal-powers");
    for (double p : powers)
        if (!(p > 0.0) || p > 4e-3 + 1e-12)
            throw DomainError("--powers: laser power must lie in (0, 4e-3] W");
    for (double t : temps)
        if (t < 250.0 || t > 400.0)
            throw DomainError("--temps: temperature outside the [250, 400] K range");

    // all validation done; simulate, then write
    const SpectraDataset ds = simulate_spectra_dataset(cfg.physics, cfg.synth, temps, powers,
                                                       cal_powers, opts.seed, !no_noise);

    fs::create_directories(opts.out);
    const RunManifest manifest = make_manifest("simulate-spectra", opts);
    std::size_t n_files = 0;
    for (std::size_t ti = 0; ti < temps.size(); ++ti) {
        for (std::size_t pi = 0; pi < powers.size(); ++pi) {
            SpectrumFileMeta meta;
            meta.series = "map";
            const std::string path = opts.out + "/map_T" + temp_tag(temps[ti]) + "_P" +
                                     format_double(powers[pi]) + ".tsv";
            write_spectrum_file(path, ds.map_spectra[ti][pi], manifest, meta);
            ++n_files;
        }
        for (std::size_t pi = 0; pi < cal_powers.size(); ++pi) {
            SpectrumFileMeta meta;
            meta.series = "calibration";
            const std::string path = opts.out + "/cal_T" + temp_tag(temps[ti]) + "_P" +
                                     format_double(cal_powers[pi]) + ".tsv";
            write_spectrum_file(path, ds.cal_spectra[ti][pi], manifest, meta);
            ++n_files;
        }
    }
    std::cout << "simulate-spectra: wrote " << n_files << " spectra ("
              << temps.size() << " temperatures) to " << opts.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

SpectraDataset load_spectra_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("spectra directory '" + dir + "' not found");
    std::map<double, std::map<double, Spectrum>> map_by_t, cal_by_t;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".tsv") continue;
        const SpectrumFile f = read_spectrum_file(entry.path().string());
        if (f.meta.role != "spectrum") continue;  // skip basis files
        auto& bucket = f.meta.series == "calibration" ? cal_by_t : map_by_t;
        bucket[f.spectrum.temperature_k][f.spectrum.laser_power_w] = f.spectrum;
    }
    if (map_by_t.empty())
        throw InsufficientDataError(
            "no map-series spectra found: need the low-power reference (I_-^pre role) "
            "and the high-power reference (I_0^pre role)");

    SpectraDataset ds;
    for (const auto& [t, by_p] : map_by_t) {
        ds.temps_k.push_back(t);
        if (ds.map_powers_w.empty())
            for (const auto& [p, s] : by_p) ds.map_powers_w.push_back(p);
        std::vector<Spectrum> row;
        for (double p : ds.map_powers_w) {
            const auto it = by_p.find(p);
            if (it == by_p.end())
                throw InsufficientDataError("map series incomplete at T = " + temp_tag(t) +
                                            " K, P = " + format_double(p) + " W");
            row.push_back(it->second);
        }
        ds.map_spectra.push_back(std::move(row));

        const auto cal_it = cal_by_t.find(t);
        std::vector<Spectrum> cal_row;
        if (cal_it != cal_by_t.end()) {
            if (ds.cal_powers_w.empty())
                for (const auto& [p, s] : cal_it->second) ds.cal_powers_w.push_back(p);
            for (double p : ds.cal_powers_w) {
                const auto it = cal_it->second.find(p);
                if (it == cal_it->second.end())
                    throw InsufficientDataError("calibration series incomplete at T = " +
                                                temp_tag(t) + " K");
                cal_row.push_back(it->second);
            }
        }
        ds.cal_spectra.push_back(std::move(cal_row));
    }
    if (!ds.map_spectra.empty()) ds.grid = ds.map_spectra[0][0].wavelengths_nm;
    for (std::size_t ti = 0; ti < ds.temps_k.size(); ++ti)
        if (ds.cal_spectra[ti].size() != ds.cal_powers_w.size() || ds.cal_powers_w.size() < 3)
            throw InsufficientDataError(
                "calibration series needs >= 3 powers at every temperature");
    return ds;
}

int cmd_decompose(const CommonOptions& opts, const std::string& spectra_dir) {
    load_config(opts.config_path);  // validates the config even though kappa is re-estimated
    const SpectraDataset ds = load_spectra_dir(spectra_dir);
    const DecomposeOutput dec = run_decompose_pipeline(ds);

    fs::create_directories(opts.out);
    const RunManifest manifest = make_manifest("decompose", opts, spectra_dir);

    {
        auto os = std::ofstream(opts.out + "/fractions.tsv");
        manifest.write_header(os);
        os << "# delta0: " << format_double(dec.delta0) << "\n";
        os << "# delta_minus: " << format_double(dec.delta_minus) << "\n";
        os << "# columns: temperature_k power_w c_minus c_zero c_sigma fraction fraction_err\n";
        for (const auto& row : dec.fractions)
            for (const auto& e : row)
                os << format_double(e.temperature_k) << "\t" << format_double(e.power_w)
                   << "\t" << format_double(e.c_minus) << "\t" << format_double(e.c_zero)
                   << "\t" << format_double(e.c_sigma) << "\t"
                   << format_double(e.fraction.value) << "\t"
                   << format_double(e.fraction.error) << "\n";
    }
    {
        auto os = std::ofstream(opts.out + "/kappa.tsv");
        manifest.write_header(os);
        os << "# columns: temperature_k kappa kappa_err slope_minus slope_zero\n";
        for (std::size_t ti = 0; ti < dec.temps_k.size(); ++ti)
            os << format_double(dec.temps_k[ti]) << "\t" << format_double(dec.kappas[ti].kappa)
               << "\t" << format_double(dec.kappas[ti].std_error) << "\t"
               << format_double(dec.kappas[ti].slope_minus_fit.params[0]) << "\t"
               << format_double(dec.kappas[ti].slope_zero_fit.params[0]) << "\n";
    }
    {
        auto os = std::ofstream(opts.out + "/variance.tsv");
        manifest.write_header(os);
        if (dec.variance_per_power.empty())
            os << "# note: variance across temperatures needs >= 2 temperatures\n";
        os << "# columns: power_w fraction_variance\n";
        for (std::size_t pi = 0; pi < dec.variance_per_power.size(); ++pi)
            os << format_double(dec.powers_w[pi]) << "\t"
               << format_double(dec.variance_per_power[pi]) << "\n";
    }
    for (const bool minus : {true, false}) {
        auto os = std::ofstream(opts.out + (minus ? "/zpl_minus.tsv" : "/zpl_zero.tsv"));
        manifest.write_header(os);
        os << "# columns: temperature_k center_nm center_err_nm fwhm_nm fwhm_err_nm\n";
        const auto& fits = minus ? dec.zpl_minus : dec.zpl_zero;
        for (std::size_t ti = 0; ti < dec.temps_k.size(); ++ti)
            os << format_double(dec.temps_k[ti]) << "\t" << format_double(fits[ti].center_nm)
               << "\t" << format_double(fits[ti].center_err_nm) << "\t"
               << format_double(fits[ti].fwhm_nm) << "\t"
               << format_double(fits[ti].fwhm_err_nm) << "\n";
    }
    for (std::size_t ti = 0; ti < dec.temps_k.size(); ++ti)
        write_basis_files(opts.out, dec.bases[ti], dec.temps_k[ti], manifest);

    std::cout << "decompose: " << dec.temps_k.size() << " temperatures, "
              << dec.powers_w.size() << " powers; kappa(294-ish) = "
              << format_double(dec.kappas[0].kappa) << " +- "
              << format_double(dec.kappas[0].std_error) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate-mapping
// ---------------------------------------------------------------------------

DecomposeOutput fractions_from_file(const std::string& path) {
    const auto f = io_detail::read_text_table(path);
    if (f.columns.size() != 7)
        throw ParseError(path + ": expected the 7-column fractions table");
    DecomposeOutput out;
    std::map<double, std::vector<FractionEntry>> rows;
    for (const auto& r : f.rows) {
        FractionEntry e;
        e.temperature_k = parse_double(r[0], path);
        e.power_w = parse_double(r[1], path);
        e.c_minus = parse_double(r[2], path);
        e.c_zero = parse_double(r[3], path);
        e.c_sigma = parse_double(r[4], path);
        e.fraction.value = parse_double(r[5], path);
        e.fraction.error = parse_double(r[6], path);
        rows[e.temperature_k].push_back(e);
    }
    for (auto& [t, row] : rows) {
        out.temps_k.push_back(t);
        if (out.powers_w.empty())
            for (const auto& e : row) out.powers_w.push_back(e.power_w);
        out.fractions.push_back(row);
    }
    return out;
}

int cmd_calibrate_mapping(const CommonOptions& opts, const std::string& fractions_path) {
    const LoadedConfig cfg = load_config(opts.config_path);
    const DecomposeOutput dec = fractions_from_file(fractions_path);
    const MappingCalibration cal =
        calibrate_mapping_pipeline(dec, cfg.physics, cfg.detector, opts.seed);

    if (const auto parent = fs::path(opts.out).parent_path(); !parent.empty())
        fs::create_directories(parent);
    ordered_json j;
    j["manifest"] = manifest_to_json(make_manifest("calibrate-mapping", opts, fractions_path));
    j["mappings"] = ordered_json::array();
    for (std::size_t ti = 0; ti < cal.temps_k.size(); ++ti)
        j["mappings"].push_back(mapping_to_json(cal.mappings[ti], cal.temps_k[ti]));
    write_json_file(opts.out, j);
    std::cout << "calibrate-mapping: " << cal.temps_k.size() << " mappings written to "
              << opts.out << "\n";
    return kExitOk;
}

MappingCalibration load_mapping_file(const std::string& path) {
    const ordered_json j = read_json_file(path);
    MappingCalibration cal;
    if (!j.contains("mappings")) throw ParseError(path + ": missing 'mappings' array");
    for (const auto& mj : j.at("mappings")) {
        cal.temps_k.push_back(mj.at("temperature_k").get<double>());
        cal.mappings.push_back(mapping_from_json(mj, path));
    }
    return cal;
}

// ---------------------------------------------------------------------------
// relaxometry
// ---------------------------------------------------------------------------

ordered_json scan_cell_json(const ScanCell& c) {
    ordered_json j;
    j["ok"] = c.ok;
    j["value_per_s"] = c.value;
    j["error_per_s"] = c.error;
    j["note"] = c.note;
    return j;
}

int cmd_relaxometry(const CommonOptions& opts, const std::string& sequence_path,
                    const std::string& temps_csv, bool no_pi, double power_override,
                    const std::string& calibration_path) {
    const LoadedConfig cfg = load_config(opts.config_path);
    PulseSequence seq = load_sequence_file(sequence_path);
    if (no_pi) seq = seq.without_pi();
    if (power_override > 0.0) seq.scale_powers(power_override);
    seq.validate();
    const std::vector<double> temps =
        temps_csv.empty() ? default_temperatures() : parse_list(temps_csv, "--temps");

    MappingCalibration calibration;
    const bool have_calibration = !calibration_path.empty();
    if (have_calibration) {
        calibration = load_mapping_file(calibration_path);
        for (double t : temps) calibration.at_temperature(t);  // validate coverage up front
    }

    const RelaxometryRun run =
        run_relaxometry_pipeline(seq, cfg.physics, cfg.detector, temps, opts.seed,
                                 have_calibration ? &calibration : nullptr);

    fs::create_directories(opts.out);
    const RunManifest manifest = make_manifest("relaxometry", opts, sequence_path);

    for (std::size_t ti = 0; ti < temps.size(); ++ti) {
        const std::string tag = temp_tag(temps[ti]);
        write_trace_file(opts.out + "/trace_T" + tag + ".tsv", run.raw_traces[ti], manifest);
        if (run.raw_traces[ti].has_with_pi)
            write_decay_series(opts.out + "/decay_pi_T" + tag + ".tsv", run.decay_pi[ti],
                               "pi_pulse_subtraction", manifest);
        write_decay_series(opts.out + "/decay_allopt_T" + tag + ".tsv",
                           run.decay_all_optical[ti], "all_optical_division", manifest);
        write_decay_series(opts.out + "/decay_recharge_T" + tag + ".tsv",
                           run.decay_recharge[ti], "nv0_recharge_division", manifest);

        const ScanRow& row = run.scan.rows[ti];
        ordered_json fits;
        fits["manifest"] = manifest_to_json(manifest);
        fits["temperature_k"] = temps[ti];
        if (row.inv_t1_pi.ok) fits["monoexp_pi"] = fit_to_json("monoexp", row.monoexp_pi);
        if (row.inv_t1_all_optical.ok)
            fits["monoexp_all_optical"] = fit_to_json("monoexp", row.monoexp_all_optical);
        if (row.inv_t_r1.ok) fits["biexp_recharge"] = fit_to_json("biexp", row.biexp_recharge);
        fits["inv_t1_pi"] = scan_cell_json(row.inv_t1_pi);
        fits["inv_t1_all_optical"] = scan_cell_json(row.inv_t1_all_optical);
        fits["inv_t_r1"] = scan_cell_json(row.inv_t_r1);
        fits["inv_t_r2"] = scan_cell_json(row.inv_t_r2);
        write_json_file(opts.out + "/fits_T" + tag + ".json", fits);
    }

    // scan table mirrors Fig. 4(b)/Fig. 5 axes
    {
        auto os = std::ofstream(opts.out + "/scan.tsv");
        manifest.write_header(os);
        os << "# columns: temperature_k inv_t1_pi inv_t1_pi_err inv_t1_ao inv_t1_ao_err "
              "inv_tr1 inv_tr1_err inv_tr2 inv_tr2_err pi_ok ao_ok tr_ok\n";
        for (const auto& row : run.scan.rows)
            os << format_double(row.temperature_k) << "\t"
               << format_double(row.inv_t1_pi.value) << "\t"
               << format_double(row.inv_t1_pi.error) << "\t"
               << format_double(row.inv_t1_all_optical.value) << "\t"
               << format_double(row.inv_t1_all_optical.error) << "\t"
               << format_double(row.inv_t_r1.value) << "\t"
               << format_double(row.inv_t_r1.error) << "\t"
               << format_double(row.inv_t_r2.value) << "\t"
               << format_double(row.inv_t_r2.error) << "\t" << (row.inv_t1_pi.ok ? 1 : 0)
               << "\t" << (row.inv_t1_all_optical.ok ? 1 : 0) << "\t"
               << (row.inv_t_r1.ok ? 1 : 0) << "\n";
    }
    {
        ordered_json j;
        j["manifest"] = manifest_to_json(manifest);
        j["rows"] = ordered_json::array();
        for (const auto& row : run.scan.rows) {
            ordered_json r;
            r["temperature_k"] = row.temperature_k;
            r["inv_t1_pi"] = scan_cell_json(row.inv_t1_pi);
            r["inv_t1_all_optical"] = scan_cell_json(row.inv_t1_all_optical);
            r["inv_t_r1"] = scan_cell_json(row.inv_t_r1);
            r["inv_t_r2"] = scan_cell_json(row.inv_t_r2);
            j["rows"].push_back(r);
        }
        write_json_file(opts.out + "/scan.json", j);
    }
    {
        ordered_json j;
        j["manifest"] = manifest_to_json(manifest);
        if (run.a1_pi_ok) j["a1_pi"] = fit_to_json("t1_temperature_model", run.a1_pi);
        if (run.a1_ao_ok)
            j["a1_all_optical"] = fit_to_json("t1_temperature_model", run.a1_all_optical);
        if (run.a1_pi_ok || run.a1_ao_ok) {
            j["a1_mean_per_s"] = run.a1_mean.value;
            j["a1_mean_err_per_s"] = run.a1_mean.error;
        }
        write_json_file(opts.out + "/a1_fit.json", j);
    }
    {
        ordered_json j;
        j["manifest"] = manifest_to_json(manifest);
        for (const char* name : {"inv_tr1", "inv_tr2"}) {
            const FlatnessCheck& fc =
                std::string(name) == "inv_tr1" ? run.flat_inv_tr1 : run.flat_inv_tr2;
            ordered_json f;
            f["ok"] = fc.ok;
            if (fc.ok) {
                f["weighted_mean_per_s"] = fc.mean.value;
                f["weighted_mean_err_per_s"] = fc.mean.error;
                f["zero_slope_chi2_reduced"] = fc.chi2_reduced;
                f["line_fit"] = fit_to_json("weighted_linear", fc.line);
            }
            j[name] = f;
        }
        write_json_file(opts.out + "/recharge_flatness.json", j);
    }
    if (run.ratio_ok) {
        auto os = std::ofstream(opts.out + "/ratio_stat.tsv");
        manifest.write_header(os);
        os << "# statistic: charge ratio at last tau over charge ratio at first tau\n";
        if (run.ratio_flatness.ok) {
            os << "# weighted_mean: " << format_double(run.ratio_flatness.mean.value) << "\n";
            os << "# weighted_mean_err: " << format_double(run.ratio_flatness.mean.error)
               << "\n";
            os << "# zero_slope_chi2_reduced: "
               << format_double(run.ratio_flatness.chi2_reduced) << "\n";
            os << "# slope_per_k: " << format_double(run.ratio_flatness.line.params[0])
               << "\n";
            os << "# slope_err_per_k: " << format_double(run.ratio_flatness.line.std_errors[0])
               << "\n";
        }
        os << "# columns: temperature_k ratio_increase ratio_increase_err\n";
        for (std::size_t ti = 0; ti < temps.size(); ++ti)
            os << format_double(temps[ti]) << "\t" << format_double(run.ratio_stats[ti].value)
               << "\t" << format_double(run.ratio_stats[ti].error) << "\n";
    }

    for (std::size_t ti = 0; ti < temps.size(); ++ti)
        for (const auto& w : run.raw_traces[ti].warnings)
            std::cerr << "warning: T=" << temp_tag(temps[ti]) << " K: " << w << "\n";

    // exit status: total failure if the always-applicable all-optical fit
    // succeeded nowhere; partial if any attempted family has mixed outcomes
    std::size_t ao_ok = 0, pi_ok = 0, tr_ok = 0;
    for (const auto& row : run.scan.rows) {
        ao_ok += row.inv_t1_all_optical.ok ? 1 : 0;
        pi_ok += row.inv_t1_pi.ok ? 1 : 0;
        tr_ok += row.inv_t_r1.ok ? 1 : 0;
    }
    const std::size_t n = run.scan.rows.size();
    std::cout << "relaxometry: " << n << " temperatures; fits ok: all-optical " << ao_ok << "/"
              << n << ", pi " << pi_ok << "/" << n << ", recharge " << tr_ok << "/" << n
              << "\n";
    if (ao_ok == 0) return kExitRuntime;
    auto mixed = [n](std::size_t k) { return k > 0 && k < n; };
    if (mixed(ao_ok) || mixed(pi_ok) || mixed(tr_ok) || (seq.has_pi() && pi_ok == 0))
        return kExitPartial;
    return kExitOk;
}

// ---------------------------------------------------------------------------
// odmr-temp
// ---------------------------------------------------------------------------

int cmd_odmr_temp(const CommonOptions& opts, const std::string& input_path) {
    const LoadedConfig cfg = load_config(opts.config_path);
    std::ifstream in(input_path);
    if (!in) throw IoError("cannot open '" + input_path + "'");

    struct Row {
        double d_hz, d_err_hz;
    };
    std::vector<Row> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto tok = io_detail::split_ws(line);
        if (tok.empty()) continue;
        const std::string where = input_path + ":" + std::to_string(lineno);
        if (tok.size() == 2) {
            rows.push_back({parse_double(tok[0], where), parse_double(tok[1], where)});
        } else if (tok.size() == 3) {
            // resonance pair f_minus f_plus with a per-resonance fit error
            const double f1 = parse_double(tok[0], where);
            const double f2 = parse_double(tok[1], where);
            const double err = parse_double(tok[2], where);
            rows.push_back({0.5 * (f1 + f2), err / std::sqrt(2.0)});
        } else {
            throw ParseError(where + ": expected 'd_hz sigma_hz' or 'f1_hz f2_hz sigma_hz'");
        }
    }
    if (rows.empty()) throw InsufficientDataError(input_path + ": no data rows");

    std::ostringstream body;
    const RunManifest manifest = make_manifest("odmr-temp", opts, input_path);
    manifest.write_header(body);
    body << "# zfs_ref_hz: " << format_double(cfg.physics.zfs_ref) << "\n";
    body << "# zfs_ref_temperature_k: " << format_double(cfg.physics.zfs_ref_temperature)
         << "\n";
    body << "# zfs_slope_hz_per_k: " << format_double(cfg.physics.zfs_slope) << "\n";
    body << "# columns: d_hz d_err_hz temperature_k temperature_err_k\n";
    for (const Row& r : rows) {
        const ValueWithError t =
            temperature_from_zfs(r.d_hz, r.d_err_hz, cfg.physics.zfs_ref,
                                 cfg.physics.zfs_ref_temperature, cfg.physics.zfs_slope,
                                 cfg.physics.zfs_slope_err);
        body << format_double(r.d_hz) << "\t" << format_double(r.d_err_hz) << "\t"
             << format_double(t.value) << "\t" << format_double(t.error) << "\n";
    }
    if (opts.out.empty()) {
        std::cout << body.str();
    } else {
        if (const auto parent = fs::path(opts.out).parent_path(); !parent.empty())
            fs::create_directories(parent);
        auto os = std::ofstream(opts.out);
        os << body.str();
        std::cout << "odmr-temp: " << rows.size() << " rows written to " << opts.out << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NV-center relaxometry simulation and analysis toolkit"};
    app.set_version_flag("--version", NVRELAX_VERSION);
    app.require_subcommand(1);

    CommonOptions opts;
    std::string temps_csv, powers_csv, cal_powers_csv, spectra_dir, fractions_path;
    std::string sequence_path, calibration_path, input_path;
    bool no_pi = false, no_noise = false;
    double power_override = 0.0;

    auto add_common = [&](CLI::App* sub, bool needs_out = true) {
        sub->add_option("--config", opts.config_path, "configuration file (key = value sections)");
        sub->add_option("--seed", opts.seed, "RNG seed recorded in all outputs");
        auto* o = sub->add_option("--out", opts.out, "output path");
        if (needs_out) o->required();
    };

    auto* sim = app.add_subcommand("simulate-spectra",
                                   "generate synthetic fluorescence spectra datasets");
    add_common(sim);
    sim->add_option("--temps", temps_csv, "comma-separated temperatures in K");
    sim->add_option("--powers", powers_csv, "comma-separated map-series powers in W");
    sim->add_option("--cal-powers", cal_powers_csv,
                    "comma-separated kappa-calibration powers in W");
    sim->add_flag("--no-noise", no_noise, "disable Poisson shot noise");

    auto* dec = app.add_subcommand("decompose",
                                   "basis construction, decomposition, kappa and fractions");
    add_common(dec);
    dec->add_option("--spectra", spectra_dir, "directory of spectrum files")->required();

    auto* cal = app.add_subcommand("calibrate-mapping",
                                   "fit the count-ratio to charge-ratio mapping per temperature");
    add_common(cal);
    cal->add_option("--fractions", fractions_path, "fractions.tsv from decompose")->required();

    auto* rel = app.add_subcommand("relaxometry",
                                   "simulate and analyze a relaxometry temperature scan");
    add_common(rel);
    rel->add_option("--sequence", sequence_path, "pulse-sequence file")->required();
    rel->add_option("--temps", temps_csv, "comma-separated temperatures in K");
    rel->add_flag("--no-pi", no_pi, "strip the pi pulse (all-optical only)");
    rel->add_option("--power", power_override, "override the laser power of all segments (W)");
    rel->add_option("--calibration", calibration_path,
                    "mapping file from calibrate-mapping (enables the ratio statistic)");

    auto* odmr = app.add_subcommand("odmr-temp",
                                    "temperatures from measured zero-field splittings");
    add_common(odmr, false);
    odmr->add_option("--input", input_path,
                     "rows of 'd_hz sigma_hz' or 'f1_hz f2_hz sigma_hz'")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (sim->parsed())
            return cmd_simulate_spectra(opts, temps_csv, powers_csv, cal_powers_csv, no_noise);
        if (dec->parsed()) return cmd_decompose(opts, spectra_dir);
        if (cal->parsed()) return cmd_calibrate_mapping(opts, fractions_path);
        if (rel->parsed())
            return cmd_relaxometry(opts, sequence_path, temps_csv, no_pi, power_override,
                                   calibration_path);
        if (odmr->parsed()) return cmd_odmr_temp(opts, input_path);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const SequenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const InsufficientDataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
