#pragma once

// Scripted grid and load events, and the infinite-bus voltage they produce.
// Event times are relative to the end of the warm-up interval.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "driveline/frames.hpp"
#include "driveline/plant.hpp"

namespace driveline {

struct PhaseJump {
    double degrees = 0.0;
    friend bool operator==(const PhaseJump&, const PhaseJump&) = default;
};
struct ThreePhaseDrop {
    double to_pu = 0.0;
    double duration = 0.0;
    friend bool operator==(const ThreePhaseDrop&, const ThreePhaseDrop&) = default;
};
struct FrequencyStep {
    double hz = 0.0;
    friend bool operator==(const FrequencyStep&, const FrequencyStep&) = default;
};
/// One phase of the infinite bus forced to zero; duration 0 means until the end of the run.
struct SinglePhaseDrop {
    int phase = 0;
    double duration = 0.0;
    friend bool operator==(const SinglePhaseDrop&, const SinglePhaseDrop&) = default;
};
struct VoltageDip {
    double to_pu = 0.5;
    double duration = 1.0;
    friend bool operator==(const VoltageDip&, const VoltageDip&) = default;
};
struct LoadStep {
    double to_pu = 0.0;
    friend bool operator==(const LoadStep&, const LoadStep&) = default;
};

using EventKind = std::variant<PhaseJump, ThreePhaseDrop, FrequencyStep, SinglePhaseDrop, VoltageDip, LoadStep>;

struct ScheduledEvent {
    double t = 0.0;
    EventKind kind;
    friend bool operator==(const ScheduledEvent&, const ScheduledEvent&) = default;
};

enum class GridKind { Stiff, Weak };
enum class ControlKind { Cascaded, Matching };

struct ScenarioScript {
    std::string name;
    std::vector<ScheduledEvent> events;
    double duration = 5.0;  // s after warm-up
    GridKind grid = GridKind::Stiff;
    double load_pu = 0.0;
    ControlKind control = ControlKind::Cascaded;

    void validate() const {
        if (!std::is_sorted(events.begin(), events.end(),
                            [](const ScheduledEvent& a, const ScheduledEvent& b) { return a.t < b.t; }))
            throw std::invalid_argument("scenario events must be time-sorted");
        if (std::abs(load_pu) > 1.0) throw std::invalid_argument("|load_pu| must be <= 1");
        for (const auto& e : events) {
            if (e.t < 0.0) throw std::invalid_argument("event times must be >= 0");
            if (!(duration > e.t)) throw std::invalid_argument("scenario duration must exceed every event time");
            if (const auto* l = std::get_if<LoadStep>(&e.kind); l && std::abs(l->to_pu) > 1.0)
                throw std::invalid_argument("|load step| must be <= 1");
            if (const auto* s = std::get_if<SinglePhaseDrop>(&e.kind); s && (s->phase < 0 || s->phase > 2))
                throw std::invalid_argument("phase index must be 0, 1 or 2");
        }
    }

    friend bool operator==(const ScenarioScript&, const ScenarioScript&) = default;
};

inline std::string_view to_string(GridKind g) { return g == GridKind::Stiff ? "stiff" : "weak"; }
inline std::string_view to_string(ControlKind c) { return c == ControlKind::Cascaded ? "cascaded" : "matching"; }

inline GridKind parse_grid(std::string_view s) {
    if (s == "stiff") return GridKind::Stiff;
    if (s == "weak") return GridKind::Weak;
    throw std::invalid_argument("unknown grid '" + std::string(s) + "'");
}

inline ControlKind parse_control(std::string_view s) {
    if (s == "cascaded") return ControlKind::Cascaded;
    if (s == "matching") return ControlKind::Matching;
    throw std::invalid_argument("unknown control '" + std::string(s) + "'");
}

namespace detail {
inline bool active(double t, double start, double duration) {
    return t >= start && (duration <= 0.0 || t < start + duration);
}
}  // namespace detail

/// Infinite-bus voltage in alpha-beta at time t (t measured from the warm-up end,
/// negative during warm-up). Built in abc and Clarke-transformed; the phase is
/// accumulated across frequency steps so it never snaps.
inline PlanarVec grid_source(double t, const ScenarioScript& script, const PlantParams& p) {
    double phase = p.omega0 * t;
    std::array<double, 3> scale{1.0, 1.0, 1.0};
    for (const auto& ev : script.events) {
        if (t < ev.t) continue;
        std::visit(
            [&](const auto& e) {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, PhaseJump>) {
                    phase += e.degrees * std::numbers::pi / 180.0;
                } else if constexpr (std::is_same_v<E, FrequencyStep>) {
                    phase += 2.0 * std::numbers::pi * e.hz * (t - ev.t);
                } else if constexpr (std::is_same_v<E, ThreePhaseDrop> || std::is_same_v<E, VoltageDip>) {
                    if (detail::active(t, ev.t, e.duration))
                        for (double& s : scale) s *= e.to_pu;
                } else if constexpr (std::is_same_v<E, SinglePhaseDrop>) {
                    if (detail::active(t, ev.t, e.duration)) scale[static_cast<std::size_t>(e.phase)] = 0.0;
                }
            },
            ev.kind);
    }
    // Per-phase peak so that the balanced alpha-beta amplitude equals vg_nom.
    const double peak = p.vg_nom * std::sqrt(2.0 / 3.0);
    constexpr double shift = 2.0 * std::numbers::pi / 3.0;
    const std::array<double, 3> abc{scale[0] * peak * std::cos(phase), scale[1] * peak * std::cos(phase - shift),
                                    scale[2] * peak * std::cos(phase + shift)};
    return clarke(abc).ab;
}

/// Load torque in p.u. of tau_nom at time t.
inline double load_pu_at(double t, const ScenarioScript& script) {
    double load = script.load_pu;
    for (const auto& ev : script.events)
        if (const auto* l = std::get_if<LoadStep>(&ev.kind); l && t >= ev.t) load = l->to_pu;
    return load;
}

/// Names accepted by scenario_preset().
inline constexpr std::array<std::string_view, 7> kScenarioNames{"phase-jump", "3ph-drop", "freq-up", "1ph-drop",
                                                                "freq-down",  "dip",      "load-step"};

/// The seven ride-through experiments. Loads: -0.5 p.u. (generating) for the phase jump,
/// three-phase drop and frequency step-up; 0.95 p.u. (motoring) for the rest.
inline ScenarioScript scenario_preset(std::string_view name, GridKind grid, ControlKind control) {
    ScenarioScript s;
    s.name = std::string(name);
    s.grid = grid;
    s.control = control;
    constexpr double t0 = 0.5;
    if (name == "phase-jump") {
        s.load_pu = -0.5;
        s.events = {{t0, PhaseJump{60.0}}};
        s.duration = 5.0;
    } else if (name == "3ph-drop") {
        s.load_pu = -0.5;
        s.events = {{t0, ThreePhaseDrop{0.0, 5.0}}};
        s.duration = 10.0;
    } else if (name == "freq-up") {
        s.load_pu = -0.5;
        s.events = {{t0, FrequencyStep{1.0}}};
        s.duration = 12.0;
    } else if (name == "1ph-drop") {
        s.load_pu = 0.95;
        s.events = {{t0, SinglePhaseDrop{0, 2.0}}};
        s.duration = 6.0;
    } else if (name == "freq-down") {
        s.load_pu = 0.95;
        s.events = {{t0, FrequencyStep{-1.0}}};
        s.duration = 12.0;
    } else if (name == "dip") {
        s.load_pu = 0.95;
        s.events = {{t0, VoltageDip{0.5, 1.0}}};
        s.duration = 5.0;
    } else if (name == "load-step") {
        s.load_pu = -0.5;
        s.events = {{t0, LoadStep{0.95}}};
        s.duration = 8.0;
    } else {
        throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
    }
    return s;
}

}  // namespace driveline
