#pragma once

// Fixed-step simulator: RK4 on the plant at dt_plant, controller sampled every
// dt_control with its outputs held in between, scenario events applied through
// the infinite-bus source and the load torque.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "driveline/controllers.hpp"
#include "driveline/errors.hpp"
#include "driveline/plant.hpp"
#include "driveline/presets.hpp"
#include "driveline/scenario.hpp"

namespace driveline {

/// Classical RK4 step of x' = f(t, x). State needs operator+ and scalar operator*.
template <class State, class Rhs>
State rk4_step(const State& x, double t, double dt, Rhs&& f) {
    const State k1 = f(t, x);
    const State k2 = f(t + 0.5 * dt, x + (0.5 * dt) * k1);
    const State k3 = f(t + 0.5 * dt, x + (0.5 * dt) * k2);
    const State k4 = f(t + dt, x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 step of the plant with every input held over the step.
inline PlantState rk4_step(const PlantState& s, const PlantInputs& u, const PlantParams& p, double dt) {
    return rk4_step(s, 0.0, dt, [&](double, const PlantState& x) { return derivative(x, u, p); });
}

/// First-order lag time constants (s) on each measured channel; 0 means ideal.
struct MeasurementLag {
    double i_g = 0.0;
    double v_g = 0.0;
    double v_dc = 0.0;
    double w1 = 0.0;
    friend bool operator==(const MeasurementLag&, const MeasurementLag&) = default;
};

/// Discrete first-order lag at the control rate, started on its first input.
class LagFilter {
public:
    LagFilter(const MeasurementLag& tau, double dt)
        : a_i_(decay(tau.i_g, dt)), a_v_(decay(tau.v_g, dt)), a_dc_(decay(tau.v_dc, dt)), a_w_(decay(tau.w1, dt)) {}

    Measurements apply(const Measurements& m) {
        if (!started_) {
            y_ = m;
            started_ = true;
            return y_;
        }
        y_.i_g = m.i_g + a_i_ * (y_.i_g - m.i_g);
        y_.v_g = m.v_g + a_v_ * (y_.v_g - m.v_g);
        y_.v_dc = m.v_dc + a_dc_ * (y_.v_dc - m.v_dc);
        y_.w1 = m.w1 + a_w_ * (y_.w1 - m.w1);
        return y_;
    }

private:
    static double decay(double tau, double dt) { return tau > 0.0 ? std::exp(-dt / tau) : 0.0; }
    double a_i_, a_v_, a_dc_, a_w_;
    Measurements y_;
    bool started_ = false;
};

struct SimConfig {
    double dt_plant = 5e-5;
    double dt_control = 1e-4;
    int record_decimation = 10;
    double warmup = 2.0;
    MeasurementLag lag;
    PlantParams plant = default_plant_params();
    GridImpedances grids;
    ControlParams control;
    ScenarioScript scenario = scenario_preset("phase-jump", GridKind::Stiff, ControlKind::Cascaded);

    /// Plant steps per control period.
    int substeps() const { return static_cast<int>(std::lround(dt_control / dt_plant)); }

    PlantParams effective_plant() const {
        PlantParams p = plant;
        p.z_grid = grids.for_grid(scenario.grid, p.omega0);
        return p;
    }

    VoltageSource voltage_source() const {
        return scenario.grid == GridKind::Stiff ? control.ff_stiff : control.ff_weak;
    }

    void validate() const {
        if (!(dt_plant > 0.0) || !(dt_control > 0.0)) throw std::invalid_argument("time steps must be > 0");
        const double ratio = dt_control / dt_plant;
        if (substeps() < 1 || std::abs(ratio - substeps()) > 1e-9 * ratio)
            throw std::invalid_argument("dt_control must be an integer multiple of dt_plant");
        if (record_decimation < 1) throw std::invalid_argument("record_decimation must be >= 1");
        if (!(warmup >= 0.0)) throw std::invalid_argument("warmup must be >= 0");
        if (!(lag.i_g >= 0.0 && lag.v_g >= 0.0 && lag.v_dc >= 0.0 && lag.w1 >= 0.0))
            throw std::invalid_argument("measurement lags must be >= 0");
        effective_plant().validate();
        scenario.validate();
    }

    friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

/// Uniformly sampled columns, SI units. Each column also carries its per-unit base.
struct SimTrace {
    std::vector<std::string> names;
    std::vector<std::string> units;
    std::vector<double> pu_base;  // 0 when the column has no per-unit form
    std::vector<std::vector<double>> columns;
    double sample_interval = 0.0;
    double event_origin = 0.0;    // absolute time of the warm-up end
    std::string scenario;
    GridKind grid = GridKind::Stiff;
    ControlKind control = ControlKind::Cascaded;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    std::size_t index_of(std::string_view name) const {
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == name) return k;
        throw std::out_of_range("no trace column '" + std::string(name) + "'");
    }
    const std::vector<double>& column(std::string_view name) const { return columns[index_of(name)]; }

    void add_column(std::string name, std::string unit, double base) {
        names.push_back(std::move(name));
        units.push_back(std::move(unit));
        pu_base.push_back(base);
        columns.emplace_back();
    }

    friend bool operator==(const SimTrace&, const SimTrace&) = default;
};

namespace detail {

inline SimTrace make_trace_layout(const PlantParams& p) {
    const double p_base = p.p_nom();
    const double i_base = p_base / p.vg_nom;
    SimTrace tr;
    tr.add_column("t", "s", 0.0);
    tr.add_column("i_alpha", "A", i_base);
    tr.add_column("i_beta", "A", i_base);
    tr.add_column("i_norm", "A", i_base);
    tr.add_column("i_star_norm", "A", i_base);
    tr.add_column("v_dc", "V", p.vdc_ref);
    tr.add_column("vg_alpha", "V", p.vg_nom);
    tr.add_column("vg_beta", "V", p.vg_nom);
    tr.add_column("vg_norm", "V", p.vg_nom);
    for (std::size_t k = 0; k < p.mass_count(); ++k) tr.add_column("w" + std::to_string(k + 1), "rad/s", p.w_nom);
    tr.add_column("tau_m", "N*m", p.tau_nom);
    tr.add_column("tau_l", "N*m", p.tau_nom);
    tr.add_column("tau_shaft", "N*m", p.tau_nom);
    tr.add_column("P_g", "W", p_base);
    tr.add_column("Q_g", "var", p_base);
    tr.add_column("P_star", "W", p_base);
    tr.add_column("Q_star", "var", p_base);
    tr.add_column("m_norm", "1", 0.0);
    tr.add_column("omega_sync", "rad/s", p.omega0);
    tr.add_column("sync_energy", "J|V^2", 0.0);
    return tr;
}

}  // namespace detail

/// Grid current in phase with the PCC voltage that draws p0 from a source v_inf
/// behind the grid impedance. A few fixed-point passes on the PCC voltage suffice.
inline PlanarVec initial_grid_current(double p0, const PlanarVec& v_inf, const PlantParams& p) {
    PlanarVec i;
    for (int k = 0; k < 8; ++k) {
        const PlanarVec v = v_inf - p.z_grid.apply(i);
        i = (p0 / norm_sq(v)) * v;
    }
    return i;
}

/// Runs one scenario. Deterministic: identical configs give bit-identical traces.
/// Throws DcCollapse or NonFinite with the simulation time of the failure.
inline SimTrace run_scenario(const SimConfig& cfg) {
    cfg.validate();
    const PlantParams plant = cfg.effective_plant();
    const ScenarioScript& script = cfg.scenario;
    const double dtc = cfg.dt_control;
    const int nsub = cfg.substeps();
    const double dtp = dtc / nsub;

    PlantState x;
    x.v_dc = plant.vdc_ref;
    const double tau_l0 = script.load_pu * plant.tau_nom;
    const double p0 = tau_l0 * plant.w_nom;
    x.shaft = twisted_shaft(plant, plant.w_nom, tau_l0);

    // Times below are relative to the warm-up end.
    const double t_start = -cfg.warmup;
    x.i_g = initial_grid_current(p0, grid_source(t_start, script, plant), plant);
    auto measure = [&](const PlantState& s, double t) {
        return Measurements{s.i_g, pcc_voltage(s, grid_source(t, script, plant), plant), s.v_dc, s.shaft[0].w};
    };

    using Controller = std::variant<CascadeController, MatchingController>;
    Controller ctrl = script.control == ControlKind::Cascaded
                          ? Controller(CascadeController(plant, cfg.control, cfg.voltage_source(), dtc))
                          : Controller(MatchingController(plant, cfg.control, dtc));
    std::visit([&](auto& c) { c.initialize(measure(x, t_start), p0, tau_l0); }, ctrl);
    LagFilter sensors(cfg.lag, dtc);

    SimTrace tr = detail::make_trace_layout(plant);
    tr.sample_interval = dtc * cfg.record_decimation;
    tr.event_origin = cfg.warmup;
    tr.scenario = script.name;
    tr.grid = script.grid;
    tr.control = script.control;

    const auto steps = static_cast<long>(std::lround((cfg.warmup + script.duration) / dtc));
    const std::size_t n = plant.mass_count();
    for (auto& c : tr.columns) c.reserve(static_cast<std::size_t>(steps / cfg.record_decimation + 2));

    for (long k = 0; k <= steps; ++k) {
        const double t = t_start + static_cast<double>(k) * dtc;
        const Measurements meas = measure(x, t);
        const Measurements sensed = sensors.apply(meas);
        const ControlOutput out = std::visit([&](auto& c) { return c.step(sensed); }, ctrl);
        if (!is_finite(out.m_g) || !std::isfinite(out.tau_m)) throw NonFinite(t + cfg.warmup, "controller output");

        if (k % cfg.record_decimation == 0) {
            const auto pq = instantaneous_power(meas.v_g, x.i_g);
            std::size_t c = 0;
            auto put = [&](double v) { tr.columns[c++].push_back(v); };
            put(t + cfg.warmup);
            put(x.i_g.x);
            put(x.i_g.y);
            put(norm(x.i_g));
            put(norm(out.i_star));
            put(x.v_dc);
            put(meas.v_g.x);
            put(meas.v_g.y);
            put(norm(meas.v_g));
            for (std::size_t j = 0; j < n; ++j) put(x.shaft[j].w);
            put(out.tau_m);
            put(load_pu_at(t, script) * plant.tau_nom);
            put(coupling_torque(x, plant, 0));
            put(pq.p);
            put(pq.q);
            put(out.p_star);
            put(out.q_star);
            put(norm(out.m_g));
            put(out.omega_sync);
            put(out.sync_energy);
        }
        if (k == steps) break;

        for (int j = 0; j < nsub; ++j) {
            const double ts = t + j * dtp;
            auto rhs = [&](double tt, const PlantState& s) {
                const PlantInputs u{out.m_g, out.tau_m, load_pu_at(tt, script) * plant.tau_nom,
                                    grid_source(tt, script, plant)};
                return derivative(s, u, plant);
            };
            try {
                x = rk4_step(x, ts, dtp, rhs);
            } catch (const DcCollapse& e) {
                throw DcCollapse(ts + cfg.warmup, e.v_dc());
            }
        }
        if (!x.finite()) throw NonFinite(t + dtc + cfg.warmup, "plant state");
    }
    return tr;
}

}  // namespace driveline
