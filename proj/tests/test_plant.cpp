#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "driveline/plant.hpp"
#include "driveline/presets.hpp"
#include "driveline/simulation.hpp"

using namespace driveline;
using Catch::Approx;

TEST_CASE("uniformly rotating shaft carrying the load torque is at rest in its twist") {
    const PlantParams p = default_plant_params();
    PlantState s;
    s.v_dc = p.vdc_ref;
    const double tau = 0.6 * p.tau_nom;
    s.shaft = twisted_shaft(p, p.w_nom, tau);
    const auto d = derivative(s, {{}, tau, tau, {}}, p);
    for (const auto& sec : d.shaft) {
        CHECK(sec.w == Approx(0.0).margin(1e-9));
        CHECK(sec.x == Approx(p.w_nom));
    }
    CHECK(coupling_torque(s, p, 0) == Approx(tau));
}

TEST_CASE("plant right-hand side against hand-computed values") {
    PlantParams p = default_plant_params();
    p.z_grid = {0.5, 2.0};
    PlantState s;
    s.i_g = {100.0, -50.0};
    s.v_dc = 4800.0;
    s.shaft = {{0.0, 60.0}, {-0.01, 61.0}};
    const PlanarVec m{0.4, 0.2};
    const PlanarVec v_inf{3000.0, 500.0};
    const double tau_m = 2e4, tau_l = 1e4;
    const auto d = derivative(s, {m, tau_m, tau_l, v_inf}, p);

    // v_g = v_inf - (r i + x J i)
    const PlanarVec v_g{3000.0 - (0.5 * 100.0 - 2.0 * -50.0), 500.0 - (2.0 * 100.0 + 0.5 * -50.0)};
    CHECK(d.i_g.x == Approx((v_g.x - p.Rg * 100.0 - 4800.0 * 0.4) / p.Lg));
    CHECK(d.i_g.y == Approx((v_g.y - p.Rg * -50.0 - 4800.0 * 0.2) / p.Lg));
    const double mi = 0.4 * 100.0 + 0.2 * -50.0;
    CHECK(d.v_dc == Approx((-p.Gdc * 4800.0 + mi - tau_m * 60.0 / 4800.0) / p.Cdc));
    const double k12 = p.couplings[0].stiffness * 0.01 + p.couplings[0].damping * (60.0 - 61.0);
    CHECK(d.shaft[0].w == Approx((tau_m - k12) / p.masses[0]));
    CHECK(d.shaft[1].w == Approx((k12 - tau_l) / p.masses[1]));
}

TEST_CASE("DC collapse and modulation bound are enforced") {
    const PlantParams p = default_plant_params();
    PlantState s;
    s.shaft = twisted_shaft(p, p.w_nom, 0.0);
    s.v_dc = p.vdc_floor();
    CHECK_THROWS_AS(derivative(s, {}, p), DcCollapse);
    s.v_dc = p.vdc_ref;
    CHECK_THROWS_AS(derivative(s, {{0.6, 0.6}, 0.0, 0.0, {}}, p), std::invalid_argument);
    CHECK_NOTHROW(derivative(s, {{kMaxModulation, 0.0}, 0.0, 0.0, {}}, p));
}

TEST_CASE("stored energy of simple states") {
    const PlantParams p = default_plant_params();
    PlantState s;
    s.v_dc = 1000.0;
    s.shaft = {{0.0, 0.0}, {0.0, 0.0}};
    CHECK(stored_energy(s, p) == Approx(0.5 * p.Cdc * 1e6));
    s.shaft = {{0.02, 3.0}, {0.0, 1.0}};
    const double expected = 0.5 * p.Cdc * 1e6 + 0.5 * p.masses[0] * 9.0 + 0.5 * p.masses[1] * 1.0 +
                            0.5 * p.couplings[0].stiffness * 0.02 * 0.02;
    CHECK(stored_energy(s, p) == Approx(expected));
}

TEST_CASE("lossless plant conserves its stored energy under RK4") {
    PlantParams p = default_plant_params();
    p.Rg = 0.0;
    p.Gdc = 0.0;
    p.z_grid = {};
    for (auto& c : p.couplings) c.damping = 0.0;
    // Rotating modulation with the converter current near its circulating equilibrium J m v / (omega0 L).
    const double m_amp = 0.3, dt = 1e-4;
    PlantState s;
    s.v_dc = p.vdc_ref;
    s.i_g = m_amp * p.vdc_ref / (p.omega0 * p.Lg) * perp(kUnitX) + PlanarVec{400.0, -250.0};
    s.shaft = {{0.0, p.w_nom}, {0.003, 0.98 * p.w_nom}};
    const double e0 = stored_energy(s, p);
    double worst = 0.0;
    for (int k = 0; k < 100000; ++k) {
        const double t = k * dt;
        const PlantInputs u{m_amp * rotate(p.omega0 * t, kUnitX), 0.005 * p.tau_nom * std::sin(2.0 * std::numbers::pi * 5.0 * t),
                            0.0, {}};
        s = rk4_step(s, u, p, dt);
        worst = std::max(worst, std::abs(stored_energy(s, p) - e0) / e0);
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("two-mass torsional frequency") {
    const PlantParams p = default_plant_params();
    const double k = p.couplings[0].stiffness;
    const double expected = std::sqrt(k * (1.0 / p.masses[0] + 1.0 / p.masses[1])) / (2.0 * std::numbers::pi);
    const auto f = torsional_frequencies(p);
    REQUIRE(f.size() == 1);
    CHECK(f[0] == Approx(expected).epsilon(1e-10));
}

TEST_CASE("shaft presets: lowest mode near 5.5 Hz and a coupled capacitance about 1000 Cdc") {
    for (const PlantParams& p : {default_plant_params(), five_mass_plant_params()}) {
        CHECK(torsional_frequencies(p).front() == Approx(5.5).epsilon(0.02));
        const double k = p.w_nom / p.vdc_ref;
        const double c_tot = p.Cdc + k * k * p.m_total();
        CHECK(p.c_tot() == Approx(c_tot));
        CHECK(c_tot / p.Cdc > 800.0);
        CHECK(c_tot / p.Cdc < 1200.0);
    }
}

TEST_CASE("rated quantities") {
    const PlantParams p = default_plant_params();
    CHECK(-0.5 * p.p_nom() == Approx(-2.93e6));
    CHECK(p.i_nom() == Approx(1.2 * p.tau_nom * p.w_nom / p.vg_nom));
}

TEST_CASE("parameter validation") {
    PlantParams p = default_plant_params();
    CHECK_NOTHROW(p.validate());
    p.Cdc = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = default_plant_params();
    p.Gdc = 0.0;
    CHECK_NOTHROW(p.validate());
    p.couplings.push_back({1.0, 0.0});
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = default_plant_params();
    p.masses = {1.0};
    p.couplings.clear();
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
