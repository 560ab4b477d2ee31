#include <catch_amalgamated.hpp>

#include <cmath>

#include "driveline/simulation.hpp"

using namespace driveline;
using Catch::Approx;

namespace {
struct Scalar {
    double v = 0.0;
    friend Scalar operator+(Scalar a, Scalar b) { return {a.v + b.v}; }
    friend Scalar operator*(double s, Scalar a) { return {s * a.v}; }
};

double rk4_error(double dt) {
    Scalar x{1.0};
    const int n = static_cast<int>(std::lround(1.0 / dt));
    for (int k = 0; k < n; ++k) x = rk4_step(x, k * dt, dt, [](double, Scalar s) { return Scalar{-s.v}; });
    return std::abs(x.v - std::exp(-1.0));
}

SimConfig quiet_config(ControlKind c, double load) {
    SimConfig cfg;
    cfg.scenario.name = "steady";
    cfg.scenario.events = {};
    cfg.scenario.duration = 1.0;
    cfg.scenario.load_pu = load;
    cfg.scenario.control = c;
    cfg.warmup = 1.0;
    return cfg;
}
}  // namespace

TEST_CASE("RK4 global error falls with the fourth power of the step") {
    const double e1 = rk4_error(0.1), e2 = rk4_error(0.05), e3 = rk4_error(0.025);
    CHECK(std::log2(e1 / e2) == Approx(4.0).margin(0.1));
    CHECK(std::log2(e2 / e3) == Approx(4.0).margin(0.1));
}

TEST_CASE("RK4 leaves a zero-rate state unchanged") {
    const Scalar x{3.25};
    CHECK(rk4_step(x, 0.0, 0.1, [](double, Scalar) { return Scalar{0.0}; }).v == 3.25);
}

TEST_CASE("identical configurations give bit-identical traces") {
    SimConfig cfg;
    cfg.scenario = scenario_preset("phase-jump", GridKind::Weak, ControlKind::Matching);
    cfg.scenario.duration = 1.0;
    cfg.warmup = 0.5;
    const SimTrace a = run_scenario(cfg);
    const SimTrace b = run_scenario(cfg);
    CHECK(a == b);
}

TEST_CASE("trace layout: constant sample interval, every column finite") {
    SimConfig cfg = quiet_config(ControlKind::Cascaded, 0.3);
    const SimTrace tr = run_scenario(cfg);
    const auto& t = tr.column("t");
    REQUIRE(tr.rows() == static_cast<std::size_t>(std::lround((cfg.warmup + 1.0) / tr.sample_interval)) + 1);
    for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] - t[k - 1] == Approx(tr.sample_interval).epsilon(1e-9));
    for (const auto& col : tr.columns)
        for (double v : col) REQUIRE(std::isfinite(v));
    CHECK(tr.names.size() == tr.units.size());
    CHECK(tr.index_of("w2") > tr.index_of("w1"));
    CHECK_THROWS_AS(tr.column("nope"), std::out_of_range);
}

TEST_CASE("zero load without events holds the operating point") {
    for (ControlKind c : {ControlKind::Cascaded, ControlKind::Matching}) {
        const SimConfig cfg = quiet_config(c, 0.0);
        const SimTrace tr = run_scenario(cfg);
        const PlantParams p = cfg.effective_plant();
        const auto& v = tr.column("v_dc");
        const auto& i = tr.column("i_norm");
        CHECK(std::abs(v.back() / p.vdc_ref - 1.0) < 1e-3);
        CHECK(i.back() / p.i_nom() < 0.05);
    }
}

TEST_CASE("generating load of -0.5 p.u. exports about 2.93 MW") {
    for (ControlKind c : {ControlKind::Cascaded, ControlKind::Matching}) {
        const SimConfig cfg = quiet_config(c, -0.5);
        const SimTrace tr = run_scenario(cfg);
        CHECK(tr.column("P_g").back() == Approx(-2.93e6).epsilon(0.01));
    }
}

TEST_CASE("DC collapse is reported with the failure time") {
    SimConfig cfg = quiet_config(ControlKind::Cascaded, 0.0);
    cfg.plant.vdc_floor_fraction = 1.0;
    try {
        run_scenario(cfg);
        FAIL("expected DcCollapse");
    } catch (const DcCollapse& e) {
        CHECK(e.time() == Approx(0.0).margin(1e-3));
        CHECK(e.v_dc() == Approx(cfg.plant.vdc_ref));
    }
}

TEST_CASE("invalid rates are rejected") {
    SimConfig cfg;
    cfg.dt_control = 1.5 * cfg.dt_plant;
    CHECK_THROWS_AS(run_scenario(cfg), std::invalid_argument);
    cfg = SimConfig{};
    cfg.record_decimation = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("measurement lag: first-order response and closed-loop run") {
    MeasurementLag lag;
    lag.v_dc = 1e-3;
    const double dt = 1e-4;
    LagFilter f(lag, dt);
    Measurements m;
    m.v_dc = 0.0;
    f.apply(m);
    m.v_dc = 1.0;
    Measurements y;
    for (int k = 0; k < 10; ++k) y = f.apply(m);
    CHECK(y.v_dc == Approx(1.0 - std::exp(-10.0 * dt / 1e-3)).epsilon(1e-12));

    SimConfig cfg = quiet_config(ControlKind::Cascaded, -0.5);
    cfg.lag = {1e-4, 1e-4, 1e-3, 1e-3};
    const SimTrace tr = run_scenario(cfg);
    CHECK(tr.column("P_g").back() == Approx(-2.93e6).epsilon(0.01));
}
