#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "driveline/pll.hpp"

using namespace driveline;
using Catch::Approx;

namespace {
double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }
}  // namespace

TEST_CASE("PLL gradients match central differences of U on random states") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> lg(std::log(0.2), std::log(2.0));
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
        const double gamma = lg(rng), theta = ang(rng);
        const PlanarVec v_g = std::exp(lg(rng)) * rotate(ang(rng), kUnitX);
        auto u = [&](double g, double t) { return pll_energy(polar_to_vector(g, t), v_g); };
        const double h = 1e-5;
        const double fd_gamma = (u(gamma + h, theta) - u(gamma - h, theta)) / (2.0 * h);
        const double fd_theta = (u(gamma, theta + h) - u(gamma, theta - h)) / (2.0 * h);
        const auto g = pll_gradient(polar_to_vector(gamma, theta), v_g);
        worst = std::max({worst, rel_err(g.g_gamma, fd_gamma), rel_err(g.g_theta, fd_theta)});
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("locked PLL advances by a pure omega0 rotation") {
    const double omega0 = 2.0 * std::numbers::pi * 50.0, dt = 1e-4;
    PllState st{{2000.0, 1500.0}, omega0, angle_of({2000.0, 1500.0})};
    const PllState next = pll_step_cartesian(st, st.v_pll, 63.0, omega0, dt);
    const PlanarVec expected = rotate(omega0 * dt, st.v_pll);
    CHECK(next.v_pll.x == Approx(expected.x).epsilon(1e-13));
    CHECK(next.v_pll.y == Approx(expected.y).epsilon(1e-13));
    CHECK(next.omega_pll == omega0);
    CHECK(next.theta_pll - st.theta_pll == Approx(omega0 * dt).epsilon(1e-12));
}

TEST_CASE("zero radial rate preserves the PLL magnitude to round-off") {
    const double omega0 = 2.0 * std::numbers::pi * 50.0, dt = 1e-4;
    PllState st{{3300.0, 0.0}, omega0, 0.0};
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        // Error purely tangential: v_g = v_pll + c J v_pll keeps v_pll . (v_pll - v_g) = 0.
        const PlanarVec v_g = st.v_pll + 0.05 * perp(st.v_pll);
        const double before = norm(st.v_pll);
        st = pll_step_cartesian(st, v_g, 63.0, omega0, dt);
        worst = std::max(worst, std::abs(norm(st.v_pll) - before) / before);
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("PLL converges onto an offset grid voltage") {
    const double omega0 = 2.0 * std::numbers::pi * 50.0, dt = 1e-4;
    const double vg = 3300.0;
    PllState st = pll_initial({vg, 0.0}, 30.0, {vg, 0.0}, omega0);
    for (int k = 1; k <= 20000; ++k) {
        // The step starts at (k - 1) dt and sees the sample taken there.
        const double t = (k - 1) * dt;
        st = pll_step_cartesian(st, vg * 0.9 * rotate(omega0 * t + 0.8, kUnitX), 63.0, omega0, dt);
    }
    const PlanarVec target = vg * 0.9 * rotate(omega0 * 2.0 + 0.8, kUnitX);
    CHECK(norm(st.v_pll - target) / vg < 1e-3);
    CHECK(st.omega_pll == Approx(omega0).epsilon(1e-4));
    CHECK(wrap_angle(st.theta_pll - angle_of(st.v_pll)) == Approx(0.0).margin(1e-9));
}

TEST_CASE("cartesian and polar forms agree for a small step") {
    const double omega0 = 2.0 * std::numbers::pi * 50.0, dt = 1e-6;
    PolarPll polar{std::log(3000.0), 0.3};
    PllState cart{polar_to_vector(polar.gamma, polar.theta), omega0, polar.theta};
    for (int k = 0; k < 2000; ++k) {
        const PlanarVec v_g = 3300.0 * rotate(omega0 * k * dt, kUnitX);
        polar = pll_step_polar(polar, v_g, 63.0, omega0, dt);
        cart = pll_step_cartesian(cart, v_g, 63.0, omega0, dt);
    }
    const PlanarVec pv = polar_to_vector(polar.gamma, polar.theta);
    CHECK(norm(pv - cart.v_pll) / norm(pv) < 1e-5);
}

TEST_CASE("initialization falls back to the nominal vector below v_eps") {
    const auto st = pll_initial({1.0, 1.0}, 30.0, {3300.0, 0.0}, 314.0);
    CHECK(st.v_pll == PlanarVec{3300.0, 0.0});
    CHECK(st.omega_pll == 314.0);
}
