#pragma once

// Text configuration: sections in brackets, one `key = value` per line, `#` starts a
// comment. A file fully determines a run. Omitted keys keep their defaults; unknown
// sections or keys are errors carrying the line number.
//
//   [scenario]
//   name = 3ph-drop
//   grid = weak
//   event = 0.5 3ph-drop 0 5     # t [s], kind, arguments

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "driveline/errors.hpp"
#include "driveline/simulation.hpp"

namespace driveline {

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string_view> words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t k = 0;
    while (k < s.size()) {
        while (k < s.size() && (s[k] == ' ' || s[k] == '\t')) ++k;
        const std::size_t b = k;
        while (k < s.size() && s[k] != ' ' && s[k] != '\t') ++k;
        if (k > b) out.push_back(s.substr(b, k - b));
    }
    return out;
}

inline double parse_double(std::string_view s, int line) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || s.empty())
        throw ConfigError(line, "expected a number, got '" + std::string(s) + "'");
    return v;
}

inline int parse_int(std::string_view s, int line) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ConfigError(line, "expected an integer, got '" + std::string(s) + "'");
    return v;
}

inline bool parse_bool(std::string_view s, int line) {
    if (s == "true" || s == "on" || s == "1") return true;
    if (s == "false" || s == "off" || s == "0") return false;
    throw ConfigError(line, "expected true/false, got '" + std::string(s) + "'");
}

inline std::vector<double> parse_list(std::string_view s, int line) {
    std::vector<double> v;
    for (auto w : split(s, ',')) v.push_back(parse_double(w, line));
    return v;
}

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt(v[k]);
    return s;
}

inline std::string event_text(const ScheduledEvent& ev) {
    return std::visit(
        [&](const auto& e) -> std::string {
            using E = std::decay_t<decltype(e)>;
            const std::string t = fmt(ev.t) + " ";
            if constexpr (std::is_same_v<E, PhaseJump>) return t + "phase-jump " + fmt(e.degrees);
            if constexpr (std::is_same_v<E, ThreePhaseDrop>) return t + "3ph-drop " + fmt(e.to_pu) + " " + fmt(e.duration);
            if constexpr (std::is_same_v<E, FrequencyStep>) return t + "freq-step " + fmt(e.hz);
            if constexpr (std::is_same_v<E, SinglePhaseDrop>)
                return t + "1ph-drop " + std::to_string(e.phase) + " " + fmt(e.duration);
            if constexpr (std::is_same_v<E, VoltageDip>) return t + "dip " + fmt(e.to_pu) + " " + fmt(e.duration);
            if constexpr (std::is_same_v<E, LoadStep>) return t + "load-step " + fmt(e.to_pu);
        },
        ev.kind);
}

inline ScheduledEvent parse_event(std::string_view s, int line) {
    const auto w = words(s);
    if (w.size() < 2) throw ConfigError(line, "event needs a time and a kind");
    auto argc = [&](std::size_t n) {
        if (w.size() != n + 2)
            throw ConfigError(line, "event '" + std::string(w[1]) + "' takes " + std::to_string(n) + " argument(s)");
    };
    auto num = [&](std::size_t k) { return parse_double(w[k], line); };
    ScheduledEvent ev;
    ev.t = num(0);
    const auto kind = w[1];
    if (kind == "phase-jump") {
        argc(1);
        ev.kind = PhaseJump{num(2)};
    } else if (kind == "3ph-drop") {
        argc(2);
        ev.kind = ThreePhaseDrop{num(2), num(3)};
    } else if (kind == "freq-step") {
        argc(1);
        ev.kind = FrequencyStep{num(2)};
    } else if (kind == "1ph-drop") {
        argc(2);
        ev.kind = SinglePhaseDrop{parse_int(w[2], line), num(3)};
    } else if (kind == "dip") {
        argc(2);
        ev.kind = VoltageDip{num(2), num(3)};
    } else if (kind == "load-step") {
        argc(1);
        ev.kind = LoadStep{num(2)};
    } else {
        throw ConfigError(line, "unknown event kind '" + std::string(kind) + "'");
    }
    return ev;
}

struct Entry {
    std::string value;
    int line = 0;
};

}  // namespace detail

/// Parses configuration text on top of the defaults. Throws ConfigError.
inline SimConfig parse_config(std::string_view text) {
    using detail::Entry;
    std::map<std::string, std::map<std::string, Entry>> sec;
    std::vector<Entry> events;
    std::string current;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        const auto line = detail::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
            current = std::string(detail::trim(line.substr(1, line.size() - 2)));
            static const std::vector<std::string> known{"sim", "plant", "grid", "control", "scenario"};
            if (std::find(known.begin(), known.end(), current) == known.end())
                throw ConfigError(line_no, "unknown section [" + current + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
        if (current.empty()) throw ConfigError(line_no, "key outside of any section");
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError(line_no, "empty key");
        if (current == "scenario" && key == "event") {
            events.push_back({value, line_no});
            continue;
        }
        if (sec[current].count(key)) throw ConfigError(line_no, "duplicate key '" + key + "'");
        sec[current][key] = {value, line_no};
    }

    SimConfig cfg;
    auto take = [&](const std::string& s, const std::string& k, auto&& apply) {
        auto& m = sec[s];
        const auto it = m.find(k);
        if (it == m.end()) return;
        apply(it->second.value, it->second.line);
        m.erase(it);
    };
    auto real = [&](const std::string& s, const std::string& k, double& dst) {
        take(s, k, [&](const std::string& v, int l) { dst = detail::parse_double(v, l); });
    };
    auto flag = [&](const std::string& s, const std::string& k, bool& dst) {
        take(s, k, [&](const std::string& v, int l) { dst = detail::parse_bool(v, l); });
    };
    auto choice = [&](const std::string& s, const std::string& k, auto& dst, auto&& table) {
        take(s, k, [&](const std::string& v, int l) {
            for (const auto& [name, val] : table)
                if (v == name) {
                    dst = val;
                    return;
                }
            throw ConfigError(l, "invalid value '" + v + "' for " + k);
        });
    };

    // [sim]
    real("sim", "dt_plant", cfg.dt_plant);
    real("sim", "dt_control", cfg.dt_control);
    take("sim", "record_decimation",
         [&](const std::string& v, int l) { cfg.record_decimation = detail::parse_int(v, l); });
    real("sim", "warmup", cfg.warmup);
    real("sim", "lag_i", cfg.lag.i_g);
    real("sim", "lag_vg", cfg.lag.v_g);
    real("sim", "lag_vdc", cfg.lag.v_dc);
    real("sim", "lag_w", cfg.lag.w1);

    // [plant]
    PlantParams& p = cfg.plant;
    real("plant", "Lg", p.Lg);
    real("plant", "Rg", p.Rg);
    real("plant", "Cdc", p.Cdc);
    real("plant", "Gdc", p.Gdc);
    real("plant", "w_nom", p.w_nom);
    real("plant", "tau_nom", p.tau_nom);
    real("plant", "vdc_ref", p.vdc_ref);
    real("plant", "vg_nom", p.vg_nom);
    real("plant", "omega0", p.omega0);
    real("plant", "alpha_q", p.alpha_q);
    real("plant", "alpha_v", p.alpha_v);
    real("plant", "vdc_floor_fraction", p.vdc_floor_fraction);
    {
        std::vector<double> stiff, damp;
        int stiff_line = 0, damp_line = 0;
        take("plant", "masses", [&](const std::string& v, int l) { p.masses = detail::parse_list(v, l); });
        take("plant", "stiffness", [&](const std::string& v, int l) {
            stiff = detail::parse_list(v, l);
            stiff_line = l;
        });
        take("plant", "damping", [&](const std::string& v, int l) {
            damp = detail::parse_list(v, l);
            damp_line = l;
        });
        if (stiff_line || damp_line) {
            if (!stiff_line) for (const auto& c : p.couplings) stiff.push_back(c.stiffness);
            if (!damp_line) for (const auto& c : p.couplings) damp.push_back(c.damping);
            if (stiff.size() != damp.size())
                throw ConfigError(std::max(stiff_line, damp_line), "stiffness and damping lists differ in length");
            p.couplings.clear();
            for (std::size_t k = 0; k < stiff.size(); ++k) p.couplings.push_back({stiff[k], damp[k]});
        }
    }

    // [grid]
    real("grid", "stiff_r", cfg.grids.stiff_r);
    real("grid", "stiff_l", cfg.grids.stiff_l);
    real("grid", "weak_r", cfg.grids.weak_r);
    real("grid", "weak_l", cfg.grids.weak_l);

    // [control]
    ControlParams& c = cfg.control;
    CascadeGains& g = c.gains;
    real("control", "zeta_m", g.zeta_m);
    real("control", "omega_m", g.omega_m);
    real("control", "zeta_dc", g.zeta_dc);
    real("control", "omega_dc", g.omega_dc);
    real("control", "zeta_g", g.zeta_g);
    real("control", "omega_g", g.omega_g);
    real("control", "kp_v", g.kp_v);
    take("control", "notch", [&](const std::string& v, int l) {
        if (v == "off") {
            g.notch.reset();
            return;
        }
        const auto w = detail::words(v);
        if (w.size() != 3) throw ConfigError(l, "notch takes 'off' or 'f0 depth width'");
        g.notch = NotchSpec{detail::parse_double(w[0], l), detail::parse_double(w[1], l), detail::parse_double(w[2], l)};
    });
    real("control", "kappa_pll", c.kappa_pll);
    flag("control", "pll_dc_coupling", c.pll_dc_coupling);
    real("control", "k_f", c.k_f);
    choice("control", "matching_gain", c.matching_gain,
           std::vector<std::pair<std::string, MatchingGainMode>>{{"constant", MatchingGainMode::Constant},
                                                                 {"orthonormal", MatchingGainMode::Orthonormal}});
    flag("control", "matching_error_impedance", c.matching_error_impedance);
    real("control", "zv_r", c.zv_r);
    real("control", "zv_l", c.zv_l);
    choice("control", "projection", c.projection,
           std::vector<std::pair<std::string, Projection>>{{"hard", Projection::Hard}, {"smooth", Projection::Smooth}});
    real("control", "v_eps_fraction", c.v_eps_fraction);
    real("control", "vg_ref", c.vg_ref);
    const std::vector<std::pair<std::string, VoltageSource>> sources{{"measured", VoltageSource::Measured},
                                                                     {"pll", VoltageSource::Pll}};
    choice("control", "ff_stiff", c.ff_stiff, sources);
    choice("control", "ff_weak", c.ff_weak, sources);

    // [scenario]: the preset first, then explicit overrides.
    {
        std::string name = cfg.scenario.name;
        GridKind grid = cfg.scenario.grid;
        ControlKind control = cfg.scenario.control;
        int name_line = 0;
        take("scenario", "name", [&](const std::string& v, int l) {
            name = v;
            name_line = l;
        });
        take("scenario", "grid", [&](const std::string& v, int l) {
            try {
                grid = parse_grid(v);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(l, e.what());
            }
        });
        take("scenario", "control", [&](const std::string& v, int l) {
            try {
                control = parse_control(v);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(l, e.what());
            }
        });
        const bool custom = std::find(kScenarioNames.begin(), kScenarioNames.end(), name) == kScenarioNames.end();
        if (custom && events.empty()) throw ConfigError(name_line, "unknown scenario '" + name + "' without events");
        if (!custom) {
            cfg.scenario = scenario_preset(name, grid, control);
        } else {
            cfg.scenario.name = name;
            cfg.scenario.grid = grid;
            cfg.scenario.control = control;
        }
        real("scenario", "load_pu", cfg.scenario.load_pu);
        real("scenario", "duration", cfg.scenario.duration);
        if (!events.empty()) {
            cfg.scenario.events.clear();
            for (const auto& e : events) cfg.scenario.events.push_back(detail::parse_event(e.value, e.line));
        }
    }

    for (const auto& [s, m] : sec)
        if (!m.empty()) throw ConfigError(m.begin()->second.line, "unknown key '" + m.begin()->first + "' in [" + s + "]");

    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, e.what());
    }
    return cfg;
}

inline SimConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(0, "cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Writes every field, so the text alone reproduces the configuration.
inline std::string serialize_config(const SimConfig& cfg) {
    using detail::fmt;
    std::ostringstream o;
    auto kv = [&](const std::string& k, const std::string& v) { o << k << " = " << v << "\n"; };
    const auto& p = cfg.plant;
    const auto& c = cfg.control;
    const auto& g = c.gains;

    o << "[sim]\n";
    kv("dt_plant", fmt(cfg.dt_plant));
    kv("dt_control", fmt(cfg.dt_control));
    kv("record_decimation", std::to_string(cfg.record_decimation));
    kv("warmup", fmt(cfg.warmup));
    kv("lag_i", fmt(cfg.lag.i_g));
    kv("lag_vg", fmt(cfg.lag.v_g));
    kv("lag_vdc", fmt(cfg.lag.v_dc));
    kv("lag_w", fmt(cfg.lag.w1));

    o << "\n[plant]\n";
    kv("Lg", fmt(p.Lg));
    kv("Rg", fmt(p.Rg));
    kv("Cdc", fmt(p.Cdc));
    kv("Gdc", fmt(p.Gdc));
    kv("w_nom", fmt(p.w_nom));
    kv("tau_nom", fmt(p.tau_nom));
    kv("vdc_ref", fmt(p.vdc_ref));
    kv("vg_nom", fmt(p.vg_nom));
    kv("omega0", fmt(p.omega0));
    kv("alpha_q", fmt(p.alpha_q));
    kv("alpha_v", fmt(p.alpha_v));
    kv("vdc_floor_fraction", fmt(p.vdc_floor_fraction));
    kv("masses", detail::fmt_list(p.masses));
    std::vector<double> stiff, damp;
    for (const auto& cp : p.couplings) {
        stiff.push_back(cp.stiffness);
        damp.push_back(cp.damping);
    }
    kv("stiffness", detail::fmt_list(stiff));
    kv("damping", detail::fmt_list(damp));

    o << "\n[grid]\n";
    kv("stiff_r", fmt(cfg.grids.stiff_r));
    kv("stiff_l", fmt(cfg.grids.stiff_l));
    kv("weak_r", fmt(cfg.grids.weak_r));
    kv("weak_l", fmt(cfg.grids.weak_l));

    o << "\n[control]\n";
    kv("zeta_m", fmt(g.zeta_m));
    kv("omega_m", fmt(g.omega_m));
    kv("zeta_dc", fmt(g.zeta_dc));
    kv("omega_dc", fmt(g.omega_dc));
    kv("zeta_g", fmt(g.zeta_g));
    kv("omega_g", fmt(g.omega_g));
    kv("kp_v", fmt(g.kp_v));
    kv("notch", g.notch ? fmt(g.notch->f0) + " " + fmt(g.notch->depth) + " " + fmt(g.notch->width) : "off");
    kv("kappa_pll", fmt(c.kappa_pll));
    kv("pll_dc_coupling", c.pll_dc_coupling ? "true" : "false");
    kv("k_f", fmt(c.k_f));
    kv("matching_gain", c.matching_gain == MatchingGainMode::Constant ? "constant" : "orthonormal");
    kv("matching_error_impedance", c.matching_error_impedance ? "true" : "false");
    kv("zv_r", fmt(c.zv_r));
    kv("zv_l", fmt(c.zv_l));
    kv("projection", c.projection == Projection::Hard ? "hard" : "smooth");
    kv("v_eps_fraction", fmt(c.v_eps_fraction));
    kv("vg_ref", fmt(c.vg_ref));
    kv("ff_stiff", c.ff_stiff == VoltageSource::Measured ? "measured" : "pll");
    kv("ff_weak", c.ff_weak == VoltageSource::Measured ? "measured" : "pll");

    o << "\n[scenario]\n";
    kv("name", cfg.scenario.name);
    kv("grid", std::string(to_string(cfg.scenario.grid)));
    kv("control", std::string(to_string(cfg.scenario.control)));
    kv("load_pu", fmt(cfg.scenario.load_pu));
    kv("duration", fmt(cfg.scenario.duration));
    for (const auto& ev : cfg.scenario.events) kv("event", detail::event_text(ev));
    return o.str();
}

/// 64-bit FNV-1a over raw bytes.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct RunManifest {
    std::string config_hash;  // fnv1a64 of the config file written next to the outputs
    std::string tool_version;
    std::string scenario;
    std::string grid;
    std::string control;
    std::vector<std::pair<std::string, std::string>> outputs;  // role, path
    double runtime_s = 0.0;
    std::vector<std::pair<std::string, bool>> checks;
    std::string error;

    bool all_passed() const {
        return error.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.second; });
    }

    std::string to_text() const {
        std::ostringstream o;
        o << "config_hash = " << config_hash << "\n";
        o << "tool_version = " << tool_version << "\n";
        o << "scenario = " << scenario << "\n";
        o << "grid = " << grid << "\n";
        o << "control = " << control << "\n";
        for (const auto& [role, path] : outputs) o << "output." << role << " = " << path << "\n";
        o << "runtime_s = " << detail::fmt(runtime_s) << "\n";
        for (const auto& [name, ok] : checks) o << "check." << name << " = " << (ok ? "pass" : "fail") << "\n";
        if (!error.empty()) o << "error = " << error << "\n";
        o << "status = " << (all_passed() ? "pass" : "fail") << "\n";
        return o.str();
    }
};

}  // namespace driveline
