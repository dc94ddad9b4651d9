#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "nvrelax/core.hpp"
#include "nvrelax/detection.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/photophysics.hpp"

// Flat "[section]  key = value" configuration files. Parse errors always name
// the offending key.

namespace nvrelax {

class ConfigFile {
  public:
    ConfigFile() = default;

    static ConfigFile from_string(const std::string& text, const std::string& origin = "<string>") {
        ConfigFile cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ParseError(origin + ":" + std::to_string(lineno) +
                                     ": malformed section header '" + line + "'");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError(origin + ":" + std::to_string(lineno) +
                                 ": expected 'key = value', got '" + line + "'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ParseError(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[section + "." + key] = value;
        }
        return cfg;
    }

    static ConfigFile from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return from_string(buf.str(), path);
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) > 0;
    }

    double get_double(const std::string& section, const std::string& key,
                      double fallback) const {
        const std::string* raw = find(section, key);
        if (!raw) return fallback;
        char* end = nullptr;
        const double v = std::strtod(raw->c_str(), &end);
        if (end == raw->c_str() || *end != '\0')
            throw ParseError(origin_ + ": key '" + section + "." + key +
                             "' is not a number: '" + *raw + "'");
        return v;
    }

    long get_long(const std::string& section, const std::string& key, long fallback) const {
        const std::string* raw = find(section, key);
        if (!raw) return fallback;
        char* end = nullptr;
        const long v = std::strtol(raw->c_str(), &end, 10);
        if (end == raw->c_str() || *end != '\0')
            throw ParseError(origin_ + ": key '" + section + "." + key +
                             "' is not an integer: '" + *raw + "'");
        return v;
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        const std::string* raw = find(section, key);
        if (!raw) return fallback;
        if (*raw == "true" || *raw == "1") return true;
        if (*raw == "false" || *raw == "0") return false;
        throw ParseError(origin_ + ": key '" + section + "." + key +
                         "' is not a boolean (true/false): '" + *raw + "'");
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        const std::string* raw = find(section, key);
        return raw ? *raw : fallback;
    }

    // Keys present in the file but never read by any parse_* call: almost
    // always a typo in the key name.
    std::set<std::string> unconsumed() const {
        std::set<std::string> out;
        for (const auto& [k, v] : values_)
            if (!consumed_.count(k)) out.insert(k);
        return out;
    }

    void require_fully_consumed() const {
        const auto leftovers = unconsumed();
        if (!leftovers.empty())
            throw ParseError(origin_ + ": unknown key '" + *leftovers.begin() + "'");
    }

    const std::string& origin() const { return origin_; }

  private:
    const std::string* find(const std::string& section, const std::string& key) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return nullptr;
        consumed_.insert(it->first);
        return &it->second;
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return {};
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    std::string origin_ = "<default>";
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
};

// Shared physical constants and model parameters for the whole toolkit.
struct PhysicsConfig {
    double kappa_lambda = 1.65;      // photoluminescence correction factor (520 nm)
    double zfs_ref = 2.870e9;        // Hz, zero-field splitting at the reference temperature
    double zfs_ref_temperature = 294.0;  // K
    double zfs_slope = -74.2e3;      // Hz/K
    double zfs_slope_err = 0.7e3;    // Hz/K
    double boltzmann_k = kBoltzmannEvPerK;  // eV/K
    bool freeze_charge = false;      // test hook: disable all charge dynamics
    TemperatureModel t1_model;
    RechargeParams recharge;
    EmissionParams emission;

    void validate() const {
        if (!(kappa_lambda > 0.0)) throw DomainError("PhysicsConfig: kappa_lambda must be > 0");
        if (!(zfs_slope < 0.0)) throw DomainError("PhysicsConfig: zfs_slope must be < 0");
        if (!(boltzmann_k > 0.0)) throw DomainError("PhysicsConfig: boltzmann_k must be > 0");
        if (!(zfs_ref > 0.0)) throw DomainError("PhysicsConfig: zfs_ref must be > 0");
        t1_model.validate();
        recharge.validate();
        emission.validate();
    }
};

inline PhysicsConfig parse_physics_config(const ConfigFile& cfg) {
    PhysicsConfig p;
    p.kappa_lambda = cfg.get_double("physics", "kappa_520", p.kappa_lambda);
    p.boltzmann_k = cfg.get_double("physics", "boltzmann_ev_per_k", p.boltzmann_k);
    p.freeze_charge = cfg.get_bool("physics", "freeze_charge", p.freeze_charge);

    p.zfs_ref = cfg.get_double("thermometry", "zfs_ref_hz", p.zfs_ref);
    p.zfs_ref_temperature =
        cfg.get_double("thermometry", "zfs_ref_temperature_k", p.zfs_ref_temperature);
    p.zfs_slope = cfg.get_double("thermometry", "zfs_slope_hz_per_k", p.zfs_slope);
    p.zfs_slope_err = cfg.get_double("thermometry", "zfs_slope_err_hz_per_k", p.zfs_slope_err);

    p.t1_model.a1 = cfg.get_double("t1_model", "a1_per_s", p.t1_model.a1);
    p.t1_model.a2 = cfg.get_double("t1_model", "a2_per_s", p.t1_model.a2);
    p.t1_model.a3 = cfg.get_double("t1_model", "a3_per_s_k5", p.t1_model.a3);
    p.t1_model.delta = cfg.get_double("t1_model", "delta_ev", p.t1_model.delta);

    auto& r = p.recharge;
    r.t_r1 = cfg.get_double("recharge", "t_r1_s", r.t_r1);
    r.t_r2 = cfg.get_double("recharge", "t_r2_s", r.t_r2);
    r.weight1 = cfg.get_double("recharge", "weight1", r.weight1);
    r.n_minus_dark_eq = cfg.get_double("recharge", "n_minus_dark_eq", r.n_minus_dark_eq);
    r.temp_coefficient =
        cfg.get_double("recharge", "temp_coefficient_per_k", r.temp_coefficient);

    auto& e = p.emission;
    e.brightness_minus = cfg.get_double("emission", "brightness_minus_cps_per_w", e.brightness_minus);
    e.brightness_zero = cfg.get_double("emission", "brightness_zero_cps_per_w", e.brightness_zero);
    e.spin_contrast = cfg.get_double("emission", "spin_contrast", e.spin_contrast);
    e.s_max = cfg.get_double("emission", "s_max", e.s_max);
    e.sat_power_spin = cfg.get_double("emission", "sat_power_spin_w", e.sat_power_spin);
    e.sat_power_charge = cfg.get_double("emission", "sat_power_charge_w", e.sat_power_charge);
    e.t_spin_unit = cfg.get_double("emission", "t_spin_unit_s", e.t_spin_unit);
    e.t_charge_unit = cfg.get_double("emission", "t_charge_unit_s", e.t_charge_unit);
    e.f_low = cfg.get_double("emission", "f_low", e.f_low);
    e.f_high = cfg.get_double("emission", "f_high", e.f_high);
    e.crosstalk_minus_in_zero =
        cfg.get_double("emission", "crosstalk_minus_in_zero", e.crosstalk_minus_in_zero);
    e.crosstalk_zero_in_minus =
        cfg.get_double("emission", "crosstalk_zero_in_minus", e.crosstalk_zero_in_minus);

    p.validate();
    return p;
}

inline DetectorConfig parse_detector_config(const ConfigFile& cfg) {
    DetectorConfig d;
    d.dark_rate_minus = cfg.get_double("detector", "dark_rate_minus_cps", d.dark_rate_minus);
    d.dark_rate_zero = cfg.get_double("detector", "dark_rate_zero_cps", d.dark_rate_zero);
    d.nd_transmission_minus =
        cfg.get_double("detector", "nd_transmission_minus", d.nd_transmission_minus);
    d.nd_transmission_zero =
        cfg.get_double("detector", "nd_transmission_zero", d.nd_transmission_zero);
    d.saturation_rate = cfg.get_double("detector", "saturation_rate_cps", d.saturation_rate);
    d.noise = cfg.get_bool("detector", "noise", d.noise);
    d.validate();
    return d;
}

// Assemble the simulator inputs, applying the freeze-charge hook: with
// frozen dynamics the recharge times and the charge pump time are pushed to
// 1e30 s, which rounds every relevant decay factor to exactly 1.
inline SequenceModel make_sequence_model(const PhysicsConfig& physics,
                                         const DetectorConfig& detector) {
    SequenceModel m;
    m.t1_model = physics.t1_model;
    m.recharge = physics.recharge;
    m.emission = physics.emission;
    m.detector = detector;
    m.boltzmann_ev_per_k = physics.boltzmann_k;
    if (physics.freeze_charge) {
        m.recharge.t_r1 = 1e30;
        m.recharge.t_r2 = 2e30;
        m.emission.t_charge_unit = 1e30;
    }
    return m;
}

}  // namespace nvrelax
