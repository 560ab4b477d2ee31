// Prints one PASS/FAIL line per acceptance criterion and exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <tuple>

#include "driveline/driveline.hpp"

using namespace driveline;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void report(int id, const std::string& title, Verdict& v) {
    std::printf("%s %d %s:%s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), v.detail.str().c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// ---------------------------------------------------------------------------

void criterion_equivalence() {
    Verdict v;
    const PlantParams p = default_plant_params();
    const CascadeGains g;
    CoupledState x0;
    x0.plant.v_dc = p.vdc_ref;
    x0.plant.i_g = {300.0, -100.0};
    x0.plant.shaft = twisted_shaft(p, p.w_nom, 0.2 * p.tau_nom);
    x0.x_m = -0.2 * p.tau_nom / g.ki_m(p.m_total());
    const EquivalenceInputs in{
        [&](double t) { return (0.6 + 0.02 * std::sin(3.0 * t)) * rotate(p.omega0 * t - 0.05, kUnitX); },
        [&](double t) { return p.vg_nom * rotate(p.omega0 * t, kUnitX); },
        [&](double t) { return (t < 1.0 ? 0.2 : 0.5) * p.tau_nom; }};
    const auto t0 = Clock::now();
    const auto rep = dc_mass_equivalence(p, g, x0, in, 5.0, 5e-5);
    const double secs = seconds_since(t0);
    v.detail << " max rel err " << rep.max_rel_error << " (" << rep.worst_state << "), peak |tau_m| "
             << rep.max_abs_tau_m / p.tau_nom << " pu, " << secs << " s";
    v.require(rep.max_rel_error <= 1e-6, "relative error <= 1e-6");
    v.require(rep.max_abs_tau_m < p.tau_nom, "saturation inactive");
    v.require(secs < 10.0, "runtime < 10 s");
    report(1, "DC-mass equivalence of the speed coupling", v);
}

void criterion_gradients() {
    Verdict v;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> mag(std::log(0.2), std::log(2.0));
    const double h = 1e-6;

    double worst_pll = 0.0;
    for (int n = 0; n < 100; ++n) {
        const double gamma = mag(rng) + std::log(3300.0), theta = ang(rng);
        const PlanarVec v_g = 3300.0 * std::exp(mag(rng)) * rotate(ang(rng), kUnitX);
        auto u = [&](double gg, double tt) { return pll_energy(polar_to_vector(gg, tt), v_g); };
        const auto gr = pll_gradient(polar_to_vector(gamma, theta), v_g);
        const double fd_g = (u(gamma + h, theta) - u(gamma - h, theta)) / (2.0 * h);
        const double fd_t = (u(gamma, theta + h) - u(gamma, theta - h)) / (2.0 * h);
        worst_pll = std::max({worst_pll, rel(gr.g_gamma, fd_g), rel(gr.g_theta, fd_t)});
    }

    const PlantParams p = default_plant_params();
    const ControlParams cp;
    const MatchingModel m{p.z_converter() + cp.z_v(p.omega0), matching_gain(p), p.omega0};
    double worst_match = 0.0;
    std::uniform_real_distribution<double> gam(std::log(0.3), kGammaMax);
    for (int n = 0; n < 100; ++n) {
        const double gamma = gam(rng), theta = ang(rng);
        const PlanarVec v_g = p.vg_nom * rotate(ang(rng), kUnitX);
        const auto gr = matching_gradients(gamma, theta, m);
        const PlanarVec fd_g =
            (steady_state_current(gamma + h, theta, v_g, m) - steady_state_current(gamma - h, theta, v_g, m)) /
            (2.0 * h);
        const PlanarVec fd_t =
            (steady_state_current(gamma, theta + h, v_g, m) - steady_state_current(gamma, theta - h, v_g, m)) /
            (2.0 * h);
        worst_match = std::max({worst_match, norm(gr.d_gamma - fd_g) / norm(fd_g), norm(gr.d_theta - fd_t) / norm(fd_t)});
    }
    v.detail << " PLL worst rel err " << worst_pll << ", matching worst rel err " << worst_match << " (100 states each)";
    v.require(worst_pll < 1e-6, "PLL gradient");
    v.require(worst_match < 1e-6, "matching gradient");
    report(2, "Gradient correctness", v);
}

void criterion_pll_norm() {
    Verdict v;
    const double omega0 = 2.0 * std::numbers::pi * 50.0, dt = 1e-4;
    PllState st{{3300.0, 0.0}, omega0, 0.0};
    double worst = 0.0;
    for (int k = 0; k < 100000; ++k) {
        const PlanarVec v_g = st.v_pll + 0.1 * std::sin(1e-3 * k) * perp(st.v_pll);
        const double before = norm(st.v_pll);
        st = pll_step_cartesian(st, v_g, 63.0, omega0, dt);
        worst = std::max(worst, std::abs(norm(st.v_pll) - before) / before);
    }
    const PllState locked{{1200.0, -2900.0}, omega0, angle_of({1200.0, -2900.0})};
    const PllState next = pll_step_cartesian(locked, locked.v_pll, 63.0, omega0, dt);
    const double rot_err = norm(next.v_pll - rotate(omega0 * dt, locked.v_pll)) / norm(locked.v_pll);
    v.detail << " worst per-step norm drift " << worst << ", locked-step deviation from omega0 rotation " << rot_err;
    v.require(worst < 1e-12, "norm drift < 1e-12 per step");
    v.require(rot_err < 1e-13, "locked PLL rotates by omega0 dt");
    report(3, "Midpoint PLL norm preservation", v);
}

void criterion_inertia() {
    Verdict v;
    const PlantParams p = default_plant_params();
    const double k = p.w_nom / p.vdc_ref;
    const double c_tot = p.Cdc + k * k * p.m_total();
    const LinearModel coupled = linearize(p, CascadeGains{});
    LinearizeOptions off;
    off.coupled = false;
    const LinearModel uncoupled = linearize(p, CascadeGains{}, off);
    const double c_eff = effective_capacitance(coupled, 0.01);
    const double c_unc = effective_capacitance(uncoupled, 0.01);
    const double tnf = torsional_frequencies(p).front();
    double zero_hz = 0.0, best = 1e300;
    for (const auto& z : transmission_zeros(coupled))
        if (std::abs(std::abs(z) - tnf) < best) {
            best = std::abs(std::abs(z) - tnf);
            zero_hz = std::abs(z);
        }
    const double ratio = c_tot / p.Cdc;
    v.detail << " C_eff " << c_eff << " F vs C_tot " << c_tot << " F (rel " << rel(c_eff, c_tot) << "), C_tot/Cdc "
             << ratio << ", uncoupled C_eff/Cdc " << c_unc / p.Cdc << ", zero " << zero_hz << " Hz vs TNF " << tnf
             << " Hz";
    v.require(rel(c_eff, c_tot) <= 0.01, "C_eff within 1% of C_tot");
    v.require(std::abs(std::log10(ratio) - 3.0) < 0.5, "C_tot/Cdc about 1e3");
    v.require(std::abs(zero_hz - tnf) <= 0.1 * tnf, "zero at TNF +-10%");
    report(4, "Effective inertia of the coupled DC link", v);
}

// ---------------------------------------------------------------------------

struct RunKey {
    std::string scenario;
    GridKind grid;
    ControlKind control;
    auto operator<=>(const RunKey&) const = default;
};

struct RunData {
    SimConfig cfg;
    SimTrace trace;
    TraceMetrics metrics;
    std::string error;
};

std::string label(const RunKey& k) {
    return k.scenario + "/" + std::string(to_string(k.grid)) + "/" + std::string(to_string(k.control));
}

std::map<RunKey, RunData> run_sweep(double& wall) {
    std::map<RunKey, RunData> runs;
    const auto t0 = Clock::now();
    for (auto name : kScenarioNames)
        for (GridKind g : {GridKind::Stiff, GridKind::Weak})
            for (ControlKind c : {ControlKind::Cascaded, ControlKind::Matching}) {
                RunData d;
                d.cfg.scenario = scenario_preset(name, g, c);
                try {
                    d.trace = run_scenario(d.cfg);
                    d.metrics = trace_metrics(d.trace, d.cfg.scenario, d.cfg.effective_plant());
                } catch (const std::exception& e) {
                    d.error = e.what();
                }
                runs.emplace(RunKey{std::string(name), g, c}, std::move(d));
            }
    wall = seconds_since(t0);
    return runs;
}

void criterion_frequency(const std::map<RunKey, RunData>& runs) {
    Verdict v;
    for (const char* name : {"freq-up", "freq-down"})
        for (GridKind g : {GridKind::Stiff, GridKind::Weak})
            for (ControlKind c : {ControlKind::Cascaded, ControlKind::Matching}) {
                const RunKey key{name, g, c};
                const RunData& d = runs.at(key);
                if (!d.error.empty()) {
                    v.require(false, label(key) + " ran");
                    continue;
                }
                const auto& m = d.metrics;
                const double sign = std::string(name) == "freq-up" ? 1.0 : -1.0;
                const double change = m.pm_after_pu / m.pm_before_pu - 1.0;
                v.detail << " " << label(key) << " dP/P " << change << " (abs " << m.pm_after_pu - m.pm_before_pu
                         << " pu)";
                v.require(std::abs(change - sign * 0.02) <= 0.2 * 0.02, label(key) + " power change 0.02 +-20%");
            }
    for (const char* name : {"freq-up", "freq-down"}) {
        const auto& cas = runs.at({name, GridKind::Stiff, ControlKind::Cascaded}).metrics;
        const auto& mat = runs.at({name, GridKind::Stiff, ControlKind::Matching}).metrics;
        v.detail << "; " << name << " stiff settling cascaded " << cas.vdc_settling_s << " s, matching "
                 << mat.vdc_settling_s << " s";
        v.require(mat.vdc_settling_s < cas.vdc_settling_s, std::string(name) + " matching settles faster");
    }
    report(5, "Frequency-step power response", v);
}

void criterion_limits(const std::map<RunKey, RunData>& runs, double wall) {
    Verdict v;
    int ok = 0;
    for (const auto& [key, d] : runs) {
        if (!d.error.empty()) {
            v.require(false, label(key) + ": " + d.error);
            continue;
        }
        bool run_ok = true;
        for (const auto& c : limit_checks(d.metrics))
            if (!c.pass) {
                run_ok = false;
                std::ostringstream s;
                s << label(key) << " " << c.name << " " << c.value;
                v.require(false, s.str());
            }
        ok += run_ok ? 1 : 0;
    }
    v.detail << " " << ok << "/" << runs.size() << " runs within limits, sweep " << wall << " s";
    v.require(runs.size() == 28, "28 runs");
    v.require(wall < 300.0, "sweep < 5 min");
    report(6, "Limits over the full sweep", v);
}

/// Samples of column `name` in the absolute time window [a, b).
std::vector<double> window(const SimTrace& tr, const std::string& name, double a, double b) {
    const auto& t = tr.column("t");
    const auto& x = tr.column(name);
    std::vector<double> out;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= a && t[k] < b) out.push_back(x[k]);
    return out;
}

void criterion_three_phase_drop(const std::map<RunKey, RunData>& runs) {
    Verdict v;
    for (GridKind g : {GridKind::Stiff, GridKind::Weak})
        for (ControlKind c : {ControlKind::Cascaded, ControlKind::Matching}) {
            const RunKey key{"3ph-drop", g, c};
            const RunData& d = runs.at(key);
            if (!d.error.empty()) {
                v.require(false, label(key) + " ran");
                continue;
            }
            const PlantParams p = d.cfg.effective_plant();
            const MetricWindows w = metric_windows(d.trace, d.cfg.scenario);
            double tau_max = 0.0;
            for (double tau : window(d.trace, "tau_m", w.fault_end - 1.0, w.fault_end))
                tau_max = std::max(tau_max, std::abs(tau) / p.tau_nom);
            v.detail << " " << label(key) << " |tau_m| " << tau_max << " pu";
            v.require(tau_max < 0.05, label(key) + " |tau_m| < 0.05 pu in the last second of the fault");

            // Skip the first 100 ms of the fault to let the current loop react.
            const auto q = window(d.trace, "Q_g", w.event + 0.1, w.fault_end);
            if (g == GridKind::Weak) {
                const double q_max = *std::max_element(q.begin(), q.end()) / p.p_nom();
                v.detail << ", max Q_g " << q_max << " pu";
                v.require(q_max < 0.0, label(key) + " Q_g < 0 during the fault");
            } else {
                const auto qs = window(d.trace, "Q_star", w.event + 0.1, w.fault_end);
                const auto is = window(d.trace, "i_star_norm", w.event + 0.1, w.fault_end);
                double q_bind = 0.0;
                std::size_t bind = 0;
                for (std::size_t k = 0; k < qs.size(); ++k)
                    if (is[k] >= 0.999 * p.i_nom()) {
                        ++bind;
                        q_bind = std::max(q_bind, std::abs(qs[k]) / p.p_nom());
                    }
                v.detail << ", limit binds " << bind << "/" << qs.size() << " samples with max |Q*| " << q_bind
                         << " pu";
                v.require(bind > 0, label(key) + " current limit binds");
                v.require(q_bind <= 0.05, label(key) + " Q* ~ 0 while the limit binds");
            }
        }
    report(7, "Three-phase drop behaviour", v);
}

void criterion_single_phase(const std::map<RunKey, RunData>& runs) {
    Verdict v;
    const RunData& cas = runs.at({"1ph-drop", GridKind::Weak, ControlKind::Cascaded});
    const RunData& mat = runs.at({"1ph-drop", GridKind::Weak, ControlKind::Matching});
    v.require(cas.error.empty() && mat.error.empty(), "both runs completed");
    v.detail << " v_dc 100 Hz RMS: matching " << mat.metrics.vdc_h2_rms << " V, cascaded " << cas.metrics.vdc_h2_rms
             << " V";
    v.require(mat.metrics.vdc_h2_rms <= cas.metrics.vdc_h2_rms, "matching <= cascaded");
    report(8, "Single-phase drop, weak grid, second harmonic", v);
}

void criterion_phase_jump(const std::map<RunKey, RunData>& runs) {
    Verdict v;
    for (ControlKind c : {ControlKind::Cascaded, ControlKind::Matching}) {
        const RunKey key{"phase-jump", GridKind::Stiff, c};
        const RunData& d = runs.at(key);
        if (!d.error.empty()) {
            v.require(false, label(key) + " ran");
            continue;
        }
        v.detail << " " << label(key) << " lock " << d.metrics.sync_lock_s << " s";
        v.require(d.metrics.sync_lock_s >= 0.0 && d.metrics.sync_lock_s <= 1.0, label(key) + " lock within 1 s");
        for (const auto& ck : limit_checks(d.metrics)) v.require(ck.pass, label(key) + " " + ck.name);
    }
    report(9, "Phase-jump resynchronization", v);
}

void criterion_determinism_energy() {
    Verdict v;
    SimConfig cfg;
    cfg.scenario = scenario_preset("1ph-drop", GridKind::Weak, ControlKind::Matching);
    const SimTrace a = run_scenario(cfg);
    const SimTrace b = run_scenario(cfg);
    const bool same = a == b;
    cfg.scenario.control = ControlKind::Cascaded;
    const bool same_c = run_scenario(cfg) == run_scenario(cfg);

    PlantParams p = default_plant_params();
    p.Rg = 0.0;
    p.Gdc = 0.0;
    p.z_grid = {};
    for (auto& c : p.couplings) c.damping = 0.0;
    const double m_amp = 0.4;
    PlantState s;
    s.v_dc = p.vdc_ref;
    s.i_g = m_amp * p.vdc_ref / (p.omega0 * p.Lg) * perp(kUnitX) + PlanarVec{500.0, 200.0};
    s.shaft = {{0.0, p.w_nom}, {0.002, 0.97 * p.w_nom}};
    const double dt = SimConfig{}.dt_plant;
    const double e0 = stored_energy(s, p);
    double drift = 0.0;
    for (int k = 0, n = static_cast<int>(std::lround(10.0 / dt)); k < n; ++k) {
        const double t = k * dt;
        const PlantInputs u{m_amp * rotate(p.omega0 * t, kUnitX),
                            0.005 * p.tau_nom * std::sin(2.0 * std::numbers::pi * 5.0 * t), 0.0, {}};
        s = rk4_step(s, u, p, dt);
        drift = std::max(drift, std::abs(stored_energy(s, p) - e0) / e0);
    }
    v.detail << " repeated runs identical: " << (same && same_c ? "yes" : "no") << ", lossless energy drift " << drift
             << " over 10 s at dt " << dt << " s";
    v.require(same && same_c, "bit-identical traces");
    v.require(drift <= 1e-6, "energy drift <= 1e-6");
    report(10, "Determinism and energy conservation", v);
}

}  // namespace

int main() {
    auto guarded = [](int id, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            std::printf("FAIL %d: exception %s\n", id, e.what());
            ++failures;
        }
    };
    guarded(1, criterion_equivalence);
    guarded(2, criterion_gradients);
    guarded(3, criterion_pll_norm);
    guarded(4, criterion_inertia);
    double wall = 0.0;
    const auto runs = run_sweep(wall);
    guarded(5, [&] { criterion_frequency(runs); });
    guarded(6, [&] { criterion_limits(runs, wall); });
    guarded(7, [&] { criterion_three_phase_drop(runs); });
    guarded(8, [&] { criterion_single_phase(runs); });
    guarded(9, [&] { criterion_phase_jump(runs); });
    guarded(10, criterion_determinism_energy);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures ? 1 : 0;
}
