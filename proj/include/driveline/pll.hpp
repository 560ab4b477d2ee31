#pragma once

// Gradient-descent PLL on the log-magnitude / angle ("ray-circle") coordinates of
// the PLL output vector. The cost is U = 1/2 |v_pll - v_g|^2; with the gain
// K = kappa / |v_pll|^2 the two coordinates are orthonormal and the law reads
//
//   gamma' = -K v_pll . (v_pll - v_g)
//   theta' = -K (J v_pll) . (v_pll - v_g) + omega_ff
//
// In cartesian form v_pll' = (nu I + omega J) v_pll, advanced with the implicit
// midpoint rule (nu and omega frozen over the step, omega pre-warped).

#include <cmath>

#include "driveline/frames.hpp"

namespace driveline {

struct PllState {
    PlanarVec v_pll{1.0, 0.0};
    double omega_pll = 0.0;
    double theta_pll = 0.0;  // unwrapped
};

struct PllGradient {
    double g_gamma = 0.0;
    double g_theta = 0.0;
};

inline double pll_energy(const PlanarVec& v_pll, const PlanarVec& v_g) { return 0.5 * norm_sq(v_pll - v_g); }

inline PllGradient pll_gradient(const PlanarVec& v_pll, const PlanarVec& v_g) {
    const PlanarVec e = v_pll - v_g;
    return {dot(v_pll, e), dot(perp(v_pll), e)};
}

/// Initial PLL state from a voltage sample; falls back to `nominal` when the sample is below v_eps.
inline PllState pll_initial(const PlanarVec& v_g, double v_eps, const PlanarVec& nominal, double omega0) {
    const PlanarVec v = norm(v_g) > v_eps ? v_g : nominal;
    return {v, omega0, angle_of(v)};
}

/// One midpoint-rule step of the cartesian PLL. omega_ff is omega0, or eta * v_dc in the
/// bidirectionally coupled variant.
inline PllState pll_step_cartesian(const PllState& st, const PlanarVec& v_g, double kappa_pll, double omega_ff,
                                   double dt) {
    const auto [g_gamma, g_theta] = pll_gradient(st.v_pll, v_g);
    const double k = kappa_pll / norm_sq(st.v_pll);
    const double nu = -k * g_gamma;
    const double omega = omega_ff - k * g_theta;

    // (I - h A)^-1 (I + h A) with A = nu I + omega J is multiplication by (1 + h a) / (1 - h a), a = nu + i omega.
    // The rotational part is pre-warped, h omega -> tan(h omega), so the step turns by exactly omega dt.
    const double h = 0.5 * dt;
    const double hw = std::tan(h * omega);
    const double nr = 1.0 + h * nu, ni = hw;
    const double dr = 1.0 - h * nu, di = -hw;
    const double den = dr * dr + di * di;
    const double fr = (nr * dr + ni * di) / den;
    const double fi = (ni * dr - nr * di) / den;

    PllState next;
    next.v_pll = {fr * st.v_pll.x - fi * st.v_pll.y, fi * st.v_pll.x + fr * st.v_pll.y};
    next.omega_pll = omega;
    // Advance by the angle actually applied to v_pll so theta stays aligned with it.
    next.theta_pll = st.theta_pll + std::atan2(fi, fr);
    return next;
}

struct PolarPll {
    double gamma = 0.0;
    double theta = 0.0;
};

inline PlanarVec polar_to_vector(double gamma, double theta) { return std::exp(gamma) * rotate(theta, kUnitX); }

/// Explicit-Euler step of the polar form; cross-check for the cartesian implementation.
inline PolarPll pll_step_polar(const PolarPll& st, const PlanarVec& v_g, double kappa_pll, double omega0, double dt) {
    const PlanarVec v = polar_to_vector(st.gamma, st.theta);
    const auto [g_gamma, g_theta] = pll_gradient(v, v_g);
    const double k = kappa_pll * std::exp(-2.0 * st.gamma);
    return {st.gamma - dt * k * g_gamma, st.theta + dt * (omega0 - k * g_theta)};
}

}  // namespace driveline
