#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "driveline/matching_control.hpp"
#include "driveline/plant.hpp"
#include "driveline/presets.hpp"
#include "driveline/simulation.hpp"

using namespace driveline;
using Catch::Approx;

namespace {
MatchingModel default_model() {
    const PlantParams p = default_plant_params();
    const double omega0 = p.omega0;
    return {p.z_converter() + impedance_from_rl(0.8, 1e-3, omega0), omega0 / p.vdc_ref, omega0};
}
double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }
}  // namespace

TEST_CASE("matching gradients match central differences of the steady-state map") {
    const MatchingModel m = default_model();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> lg(std::log(0.3), kGammaMax);
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
        const double gamma = lg(rng), theta = ang(rng);
        const PlanarVec v_g = 3300.0 * rotate(ang(rng), kUnitX);
        const double h = 1e-6;
        const PlanarVec fd_g = (steady_state_current(gamma + h, theta, v_g, m) -
                                steady_state_current(gamma - h, theta, v_g, m)) / (2.0 * h);
        const PlanarVec fd_t = (steady_state_current(gamma, theta + h, v_g, m) -
                                steady_state_current(gamma, theta - h, v_g, m)) / (2.0 * h);
        const auto g = matching_gradients(gamma, theta, m);
        const double scale_g = norm(fd_g), scale_t = norm(fd_t);
        worst = std::max({worst, norm(g.d_gamma - fd_g) / scale_g, norm(g.d_theta - fd_t) / scale_t,
                          rel_err(norm(g.d_gamma), scale_g)});
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("steady-state map equals the settled RL current at omega0") {
    // Plant filter alone: the map with Z = Z_g must reproduce the phasor steady state.
    const PlantParams p = default_plant_params();
    const MatchingModel m{p.z_converter(), p.omega0 / p.vdc_ref, p.omega0};
    const double gamma = std::log(0.62), theta0 = 0.1;
    const double vg = 3300.0;
    PlanarVec i{};
    const double dt = 5e-6;
    double t = 0.0;
    auto rhs = [&](double tt, const PlanarVec& x) {
        const PlanarVec v_g = vg * rotate(p.omega0 * tt, kUnitX);
        const PlanarVec mod = std::exp(gamma) * rotate(theta0 + p.omega0 * tt, kUnitX);
        return (v_g - p.Rg * x - p.vdc_ref * mod) / p.Lg;
    };
    // L/R = 90 ms; 2 s is more than 20 time constants.
    for (int k = 0; k < 400000; ++k, t += dt) i = rk4_step(i, t, dt, rhs);
    const PlanarVec v_g_now = vg * rotate(p.omega0 * t, kUnitX);
    const PlanarVec mapped = steady_state_current(gamma, theta0 + p.omega0 * t, v_g_now, m);
    CHECK(norm(i - mapped) / norm(mapped) < 1e-6);
}

TEST_CASE("initial state produces zero mapped current") {
    const MatchingModel m = default_model();
    const PlanarVec v_g{2000.0, 2600.0};
    const auto st = matching_initial(v_g, m);
    CHECK(norm(steady_state_current(st.gamma_r, st.theta, v_g, m)) < 1e-9);
    CHECK(st.gamma_r <= kGammaMax);
}

TEST_CASE("matching step: rotation at eta v_dc when tracking, gamma bound enforced") {
    MatchingStepParams p;
    p.model = default_model();
    p.lg = 9e-4;
    const double dt = 1e-4, v_dc = 5100.0;
    MatchingState st{std::log(0.6), 0.2};
    const PlanarVec i{300.0, 40.0};
    auto out = matching_step(st, i, i, v_dc, p, dt);
    CHECK(out.state.gamma_r == st.gamma_r);
    CHECK(out.state.theta == Approx(0.2 + dt * p.model.eta * v_dc));
    CHECK(out.m_g.x == Approx(0.6 * std::cos(0.2)));

    // Error that drives gamma upward is clipped at the modulation bound.
    st.gamma_r = kGammaMax;
    const auto g = matching_gradients(st.gamma_r, st.theta, p.model);
    const PlanarVec push = 1e4 * g.d_gamma / norm(g.d_gamma);  // d_gamma . (i - i*) > 0 lowers gamma
    out = matching_step(st, -push, PlanarVec{}, v_dc, p, dt);
    CHECK(out.state.gamma_r == kGammaMax);
    CHECK(out.sync_gamma > 0.0);
}

TEST_CASE("orthonormal gain scales with exp(-2 gamma)") {
    MatchingStepParams p;
    p.model = default_model();
    p.lg = 9e-4;
    const MatchingState st{std::log(0.5), 0.0};
    const PlanarVec i{100.0, 0.0};
    const auto a = matching_step(st, i, {}, 5000.0, p, 1e-4);
    p.mode = MatchingGainMode::Orthonormal;
    const auto b = matching_step(st, i, {}, 5000.0, p, 1e-4);
    CHECK(b.sync_theta == Approx(a.sync_theta * 4.0));
}

TEST_CASE("error impedance vanishes when the current tracks") {
    MatchingStepParams p;
    p.model = default_model();
    p.lg = 9e-4;
    p.error_impedance = ComplexImpedance{0.8, 0.314};
    const MatchingState st{std::log(0.6), 0.0};
    const PlanarVec i{250.0, -80.0};
    const auto same = matching_step(st, i, i, 5000.0, p, 1e-4);
    CHECK(same.m_g == matching_modulation(st));
    const PlanarVec i_star{200.0, -80.0};
    const auto off = matching_step(st, i, i_star, 5000.0, p, 1e-4);
    const PlanarVec expected = matching_modulation(st) + ComplexImpedance{0.8, 0.314}.apply(i - i_star) / 5000.0;
    CHECK(off.m_g.x == Approx(expected.x));
    CHECK(off.m_g.y == Approx(expected.y));
}

TEST_CASE("power reference and tracking energy") {
    CHECK(matching_power_reference(-4e4, 62.8) == Approx(-4e4 * 62.8));
    CHECK(tracking_energy({3.0, 4.0}, {0.0, 0.0}, 2.0) == Approx(25.0));
}
