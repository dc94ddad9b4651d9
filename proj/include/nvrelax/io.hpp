#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nvrelax/core.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/photophysics.hpp"
#include "nvrelax/relaxometry.hpp"
#include "nvrelax/spectra.hpp"
#include "nvrelax/trace.hpp"
#include "nvrelax/version.hpp"

// File formats: spectra and basis functions as two-column delimited text with
// '#'-prefixed headers, pulse sequences as line-oriented segment lists, traces
// and tables as delimited text, structured reports as JSON. Every output file
// carries a run manifest and is byte-identical across reruns with the same
// seed and configuration.

namespace nvrelax {

using ordered_json = nlohmann::ordered_json;

// Shortest round-trip decimal representation; keeps outputs byte-stable.
inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ParseError(context + ": not a number: '" + s + "'");
    return v;
}

// Provenance header recorded in every output file. The timestamp field is
// serialized as "-": outputs are required to be byte-identical across reruns
// with the same seed and config, which a wall-clock stamp would break.
struct RunManifest {
    std::string command;
    std::string config_path = "<defaults>";
    std::string inputs = "-";
    std::string outputs = "-";
    std::uint64_t seed = 0;
    std::string tool_version = NVRELAX_VERSION;
    std::string timestamp = "-";

    void write_header(std::ostream& os) const {
        os << "# nvrelax " << tool_version << "\n";
        os << "# command: " << command << "\n";
        os << "# config: " << config_path << "\n";
        os << "# inputs: " << inputs << "\n";
        os << "# outputs: " << outputs << "\n";
        os << "# seed: " << seed << "\n";
        os << "# timestamp: " << timestamp << "\n";
    }
};

namespace io_detail {

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    return os;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

struct ParsedTextFile {
    std::map<std::string, std::string> header;  // "# key: value" lines
    std::vector<std::string> columns;           // from "# columns: ..." line
    std::vector<std::vector<std::string>> rows;
};

inline ParsedTextFile read_text_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    ParsedTextFile out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                const std::string key = trim(line.substr(1, colon - 1));
                const std::string value = trim(line.substr(colon + 1));
                if (key == "columns")
                    out.columns = split_ws(value);
                else
                    out.header[key] = value;
            }
            continue;
        }
        out.rows.push_back(split_ws(line));
        if (!out.columns.empty() && out.rows.back().size() != out.columns.size())
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(out.columns.size()) + " columns, got " +
                             std::to_string(out.rows.back().size()));
    }
    return out;
}

inline double header_double(const ParsedTextFile& f, const std::string& key,
                            const std::string& path) {
    const auto it = f.header.find(key);
    if (it == f.header.end()) throw ParseError(path + ": missing header key '" + key + "'");
    return parse_double(it->second, path + " header '" + key + "'");
}

inline std::string header_string(const ParsedTextFile& f, const std::string& key,
                                 const std::string& path) {
    const auto it = f.header.find(key);
    if (it == f.header.end()) throw ParseError(path + ": missing header key '" + key + "'");
    return it->second;
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Spectrum and basis files
// ---------------------------------------------------------------------------

// role: "spectrum" for measurements, "basis_minus"/"basis_zero" for basis
// functions; series: "map" or "calibration" for simulated datasets.
struct SpectrumFileMeta {
    std::string role = "spectrum";
    std::string series = "map";
};

inline void write_spectrum_file(const std::string& path, const Spectrum& s,
                                const RunManifest& manifest,
                                const SpectrumFileMeta& meta = {}) {
    auto os = io_detail::open_out(path);
    manifest.write_header(os);
    os << "# role: " << meta.role << "\n";
    os << "# series: " << meta.series << "\n";
    os << "# power_w: " << format_double(s.laser_power_w) << "\n";
    os << "# temperature_k: " << format_double(s.temperature_k) << "\n";
    os << "# exposure_s: " << format_double(s.exposure_s) << "\n";
    os << "# columns: wavelength_nm counts_per_s\n";
    for (std::size_t i = 0; i < s.size(); ++i)
        os << format_double(s.wavelengths_nm[i]) << "\t" << format_double(s.intensities[i])
           << "\n";
}

struct SpectrumFile {
    Spectrum spectrum;
    SpectrumFileMeta meta;
};

inline SpectrumFile read_spectrum_file(const std::string& path) {
    const auto f = io_detail::read_text_table(path);
    SpectrumFile out;
    out.meta.role = io_detail::header_string(f, "role", path);
    out.meta.series = io_detail::header_string(f, "series", path);
    out.spectrum.laser_power_w = io_detail::header_double(f, "power_w", path);
    out.spectrum.temperature_k = io_detail::header_double(f, "temperature_k", path);
    out.spectrum.exposure_s = io_detail::header_double(f, "exposure_s", path);
    for (std::size_t r = 0; r < f.rows.size(); ++r) {
        if (f.rows[r].size() != 2)
            throw ParseError(path + ": data row " + std::to_string(r) + " needs 2 columns");
        out.spectrum.wavelengths_nm.push_back(parse_double(f.rows[r][0], path));
        out.spectrum.intensities.push_back(parse_double(f.rows[r][1], path));
    }
    out.spectrum.validate();
    return out;
}

inline void write_basis_files(const std::string& dir, const BasisSet& basis,
                              double temperature_k, const RunManifest& manifest) {
    for (const bool minus : {true, false}) {
        Spectrum s;
        s.wavelengths_nm = basis.wavelength_grid;
        s.intensities = minus ? basis.basis_minus : basis.basis_zero;
        s.temperature_k = temperature_k;
        s.exposure_s = 1.0;
        SpectrumFileMeta meta;
        meta.role = minus ? "basis_minus" : "basis_zero";
        meta.series = "basis";
        const std::string path = dir + "/basis_T" + format_double(temperature_k) +
                                 (minus ? "_minus.tsv" : "_zero.tsv");
        auto os = io_detail::open_out(path);
        manifest.write_header(os);
        os << "# role: " << meta.role << "\n";
        os << "# series: basis\n";
        os << "# power_w: 0\n";
        os << "# temperature_k: " << format_double(temperature_k) << "\n";
        os << "# exposure_s: 1\n";
        os << "# delta0: " << format_double(basis.delta0) << "\n";
        os << "# delta_minus: " << format_double(basis.delta_minus) << "\n";
        os << "# columns: wavelength_nm counts_per_s\n";
        for (std::size_t i = 0; i < s.size(); ++i)
            os << format_double(s.wavelengths_nm[i]) << "\t"
               << format_double(s.intensities[i]) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Pulse-sequence files
// ---------------------------------------------------------------------------

// Line-oriented segment list with a header for the sweep and repetitions:
//   repetitions 50000
//   sweeps 1
//   pause 1e-3
//   tau_log 1e-6 3e-2 25        (or: taus 1e-6,2e-6,...)
//   LASER <power_w> <duration_s>
//   READ <normalization|signal> <duration_s>   (binds to the previous LASER)
//   DARK <duration_s|tau>
//   PI
inline PulseSequence parse_sequence_text(const std::string& text,
                                         const std::string& origin = "<string>") {
    PulseSequence seq;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_tau_spec = false;
    bool laser_open = false;  // READ lines must directly follow their LASER
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = io_detail::trim(line);
        if (line.empty()) continue;
        const auto tok = io_detail::split_ws(line);
        const std::string where = origin + ":" + std::to_string(lineno);
        const std::string& kw = tok[0];

        if (kw == "repetitions" && tok.size() == 2) {
            seq.repetitions = static_cast<long>(parse_double(tok[1], where));
        } else if (kw == "sweeps" && tok.size() == 2) {
            seq.sweeps = static_cast<int>(parse_double(tok[1], where));
        } else if (kw == "pause" && tok.size() == 2) {
            seq.pause_s = parse_double(tok[1], where);
        } else if (kw == "taus" && tok.size() == 2) {
            std::istringstream ts(tok[1]);
            std::string v;
            while (std::getline(ts, v, ','))
                seq.tau_sweep_s.push_back(parse_double(v, where));
            have_tau_spec = true;
        } else if (kw == "tau_log" && tok.size() == 4) {
            const double lo = parse_double(tok[1], where);
            const double hi = parse_double(tok[2], where);
            const int n = static_cast<int>(parse_double(tok[3], where));
            if (!(lo > 0.0) || !(hi > lo) || n < 2)
                throw ParseError(where + ": tau_log needs 0 < lo < hi and n >= 2");
            for (int i = 0; i < n; ++i)
                seq.tau_sweep_s.push_back(lo * std::pow(hi / lo, double(i) / double(n - 1)));
            have_tau_spec = true;
        } else if (kw == "LASER" && tok.size() == 3) {
            seq.segments.push_back(LaserSegment{parse_double(tok[1], where),
                                                parse_double(tok[2], where),
                                                {}});
            laser_open = true;
        } else if (kw == "READ" && tok.size() == 3) {
            if (!laser_open)
                throw ParseError(where +
                                 ": READ must directly follow its enclosing LASER segment");
            Window label;
            if (tok[1] == "normalization")
                label = Window::normalization;
            else if (tok[1] == "signal")
                label = Window::signal;
            else
                throw ParseError(where + ": READ label must be normalization or signal");
            std::get<LaserSegment>(seq.segments.back())
                .reads.push_back(ReadWindow{label, parse_double(tok[2], where)});
        } else if (kw == "DARK" && tok.size() == 2) {
            if (tok[1] == "tau")
                seq.segments.push_back(DarkSegment{0.0, true});
            else
                seq.segments.push_back(DarkSegment{parse_double(tok[1], where), false});
            laser_open = false;
        } else if (kw == "PI" && tok.size() == 1) {
            seq.segments.push_back(PiSegment{});
            laser_open = false;
        } else {
            throw ParseError(where + ": unrecognized line '" + line + "'");
        }
    }
    if (!have_tau_spec) throw ParseError(origin + ": no tau sweep (taus or tau_log)");
    seq.validate();
    return seq;
}

inline PulseSequence load_sequence_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open sequence file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sequence_text(buf.str(), path);
}

inline std::string sequence_to_text(const PulseSequence& seq) {
    std::ostringstream os;
    os << "repetitions " << seq.repetitions << "\n";
    os << "sweeps " << seq.sweeps << "\n";
    os << "pause " << format_double(seq.pause_s) << "\n";
    os << "taus ";
    for (std::size_t i = 0; i < seq.tau_sweep_s.size(); ++i)
        os << (i ? "," : "") << format_double(seq.tau_sweep_s[i]);
    os << "\n";
    for (const auto& seg : seq.segments) {
        if (const auto* l = std::get_if<LaserSegment>(&seg)) {
            os << "LASER " << format_double(l->power_w) << " " << format_double(l->duration_s)
               << "\n";
            for (const auto& r : l->reads)
                os << "READ " << to_string(r.label) << " " << format_double(r.duration_s)
                   << "\n";
        } else if (const auto* d = std::get_if<DarkSegment>(&seg)) {
            if (d->is_tau)
                os << "DARK tau\n";
            else
                os << "DARK " << format_double(d->duration_s) << "\n";
        } else {
            os << "PI\n";
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

inline void write_trace_file(const std::string& path, const RelaxometryTrace& trace,
                             const RunManifest& manifest) {
    auto os = io_detail::open_out(path);
    manifest.write_header(os);
    os << "# temperature_k: " << format_double(trace.temperature_k) << "\n";
    os << "# laser_power_w: " << format_double(trace.laser_power_w) << "\n";
    os << "# repetitions: " << trace.repetitions << "\n";
    os << "# sweeps: " << trace.sweeps << "\n";
    os << "# rng_seed: " << trace.seed << "\n";
    os << "# has_with_pi: " << (trace.has_with_pi ? "true" : "false") << "\n";
    os << "# provenance: "
       << (trace.provenance == RelaxometryTrace::Provenance::raw ? "raw" : "corrected")
       << "\n";
    os << "# window_normalization_s: " << format_double(trace.window_duration_s[0]) << "\n";
    os << "# window_signal_s: " << format_double(trace.window_duration_s[1]) << "\n";
    os << "# columns: tau_s half window channel mean std_dev clamped\n";
    for (std::size_t ti = 0; ti < trace.tau_s.size(); ++ti)
        for (Half h : {Half::with_pi, Half::without_pi}) {
            if (h == Half::with_pi && !trace.has_with_pi) continue;
            for (Window w : {Window::normalization, Window::signal})
                for (Channel c : {Channel::minus, Channel::zero}) {
                    const TraceCell& cell = trace.at(ti, h, w, c);
                    os << format_double(trace.tau_s[ti]) << "\t" << to_string(h) << "\t"
                       << to_string(w) << "\t" << to_string(c) << "\t"
                       << format_double(cell.mean) << "\t" << format_double(cell.std_dev)
                       << "\t" << (cell.clamped ? 1 : 0) << "\n";
                }
        }
}

inline RelaxometryTrace read_trace_file(const std::string& path) {
    const auto f = io_detail::read_text_table(path);
    RelaxometryTrace trace;
    trace.temperature_k = io_detail::header_double(f, "temperature_k", path);
    trace.laser_power_w = io_detail::header_double(f, "laser_power_w", path);
    trace.repetitions = static_cast<long>(io_detail::header_double(f, "repetitions", path));
    trace.sweeps = static_cast<int>(io_detail::header_double(f, "sweeps", path));
    trace.seed = std::strtoull(io_detail::header_string(f, "rng_seed", path).c_str(), nullptr, 10);
    trace.has_with_pi = io_detail::header_string(f, "has_with_pi", path) == "true";
    trace.provenance = io_detail::header_string(f, "provenance", path) == "corrected"
                           ? RelaxometryTrace::Provenance::corrected
                           : RelaxometryTrace::Provenance::raw;
    trace.window_duration_s[0] = io_detail::header_double(f, "window_normalization_s", path);
    trace.window_duration_s[1] = io_detail::header_double(f, "window_signal_s", path);

    std::vector<double> taus;
    for (const auto& row : f.rows) {
        const double tau = parse_double(row[0], path);
        if (taus.empty() || tau != taus.back()) taus.push_back(tau);
    }
    trace.tau_s = taus;
    trace.allocate();
    for (const auto& row : f.rows) {
        if (row.size() != 7) throw ParseError(path + ": trace rows need 7 columns");
        const double tau = parse_double(row[0], path);
        std::size_t ti = 0;
        while (ti < taus.size() && taus[ti] != tau) ++ti;
        if (ti == taus.size()) throw ParseError(path + ": tau value out of order");
        const Half h = row[1] == "with_pi" ? Half::with_pi : Half::without_pi;
        const Window w = row[2] == "normalization" ? Window::normalization : Window::signal;
        const Channel c = row[3] == "minus" ? Channel::minus : Channel::zero;
        TraceCell& cell = trace.cells[RelaxometryTrace::index_of(ti, h, w, c)];
        cell.mean = parse_double(row[4], path);
        cell.std_dev = parse_double(row[5], path);
        cell.clamped = row[6] == "1";
    }
    trace.validate();
    return trace;
}

// ---------------------------------------------------------------------------
// Decay series, tables and JSON reports
// ---------------------------------------------------------------------------

inline void write_decay_series(const std::string& path, const DecaySeries& d,
                               const std::string& evaluation, const RunManifest& manifest) {
    auto os = io_detail::open_out(path);
    manifest.write_header(os);
    os << "# evaluation: " << evaluation << "\n";
    os << "# columns: tau_s y sigma\n";
    for (std::size_t i = 0; i < d.tau_s.size(); ++i)
        os << format_double(d.tau_s[i]) << "\t" << format_double(d.y[i]) << "\t"
           << format_double(d.sigma[i]) << "\n";
}

inline ordered_json fit_to_json(const std::string& model_id, const FitResult& fit) {
    ordered_json j;
    j["model"] = model_id;
    j["params"] = fit.params;
    j["std_errors"] = fit.std_errors;
    j["covariance"] = fit.covariance;
    j["chi_squared"] = fit.chi_squared;
    j["dof"] = fit.dof;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["warnings"] = fit.warnings;
    return j;
}

inline ordered_json manifest_to_json(const RunManifest& m) {
    ordered_json j;
    j["tool"] = "nvrelax";
    j["version"] = m.tool_version;
    j["command"] = m.command;
    j["config"] = m.config_path;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["seed"] = m.seed;
    j["timestamp"] = m.timestamp;
    return j;
}

inline void write_json_file(const std::string& path, const ordered_json& j) {
    auto os = io_detail::open_out(path);
    os << j.dump(2) << "\n";
}

inline ordered_json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
    return j;
}

inline ordered_json mapping_to_json(const ChargeRatioMapping& m, double temperature_k) {
    ordered_json j;
    j["temperature_k"] = temperature_k;
    j["model"] = "a*x^n+c";
    j["a"] = m.a;
    j["n"] = m.n;
    j["c"] = m.c;
    j["ratio_min"] = m.ratio_min;
    j["ratio_max"] = m.ratio_max;
    j["fit"] = fit_to_json("power_law", m.fit);
    return j;
}

inline ChargeRatioMapping mapping_from_json(const ordered_json& j, const std::string& path) {
    ChargeRatioMapping m;
    try {
        m.a = j.at("a").get<double>();
        m.n = j.at("n").get<double>();
        m.c = j.at("c").get<double>();
        m.ratio_min = j.at("ratio_min").get<double>();
        m.ratio_max = j.at("ratio_max").get<double>();
        const auto& fit = j.at("fit");
        m.fit.params = fit.at("params").get<std::vector<double>>();
        m.fit.std_errors = fit.at("std_errors").get<std::vector<double>>();
        m.fit.covariance = fit.at("covariance").get<std::vector<std::vector<double>>>();
        m.fit.chi_squared = fit.at("chi_squared").get<double>();
        m.fit.dof = fit.at("dof").get<std::size_t>();
    } catch (const std::exception& e) {
        throw ParseError(path + ": malformed mapping JSON: " + e.what());
    }
    return m;
}

}  // namespace nvrelax
