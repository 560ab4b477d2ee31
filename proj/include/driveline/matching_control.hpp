#pragma once

// Synchronous-machine matching on the grid-side converter. The modulation is
// m = e^gamma R(theta) g1; theta turns at the matching frequency eta v_dc, and a
// gradient branch on (gamma, theta) steers the measured current towards i*
// through the steady-state map
//
//   i_hat(gamma, theta) = -Z^-1 ( (omega0/eta) e^gamma R(theta) g1 - v_g ).
//
// The gradient of S = 1/2 (i - i*)' L (i - i*) is evaluated with the measured
// current in place of i_hat.
//
// Optionally the converter also applies the virtual impedance to the tracking
// error, m = e^gamma R(theta) g1 + Z_v (i - i*) / v_dc. The term vanishes at
// i = i*, so the equilibrium and the bound on gamma are unchanged, while the
// plant's static sensitivity to (gamma, theta) becomes the one the map assumes.
// Without it the lightly damped network mode near omega0 goes unstable on a
// stiff grid.

#include <algorithm>
#include <cmath>
#include <optional>

#include "driveline/frames.hpp"

namespace driveline {

/// Upper bound on gamma_r so that |m_g| <= 1/sqrt(2).
inline const double kGammaMax = std::log(kMaxModulation);

struct MatchingState {
    double gamma_r = kGammaMax;
    double theta = 0.0;  // unwrapped
};

enum class MatchingGainMode { Constant, Orthonormal };

/// Model parameters of the steady-state map. z is the effective impedance Z_g + Z_v.
struct MatchingModel {
    ComplexImpedance z;
    double eta = 0.0;
    double omega0 = 0.0;
};

inline PlanarVec matching_modulation(const MatchingState& st) { return std::exp(st.gamma_r) * rotate(st.theta, kUnitX); }

inline PlanarVec steady_state_current(double gamma_r, double theta, const PlanarVec& v_g, const MatchingModel& m) {
    const PlanarVec e = (m.omega0 / m.eta) * std::exp(gamma_r) * rotate(theta, kUnitX);
    return -m.z.solve(e - v_g);
}

/// Partial derivatives of the steady-state current with respect to gamma_r and theta.
struct MatchingGradients {
    PlanarVec d_gamma;
    PlanarVec d_theta;
};

inline MatchingGradients matching_gradients(double gamma_r, double theta, const MatchingModel& m) {
    const PlanarVec d_gamma = -m.z.solve((m.omega0 / m.eta) * std::exp(gamma_r) * rotate(theta, kUnitX));
    // Z^-1 commutes with J, so the theta derivative is J times the gamma derivative.
    return {d_gamma, perp(d_gamma)};
}

/// Initial state producing zero current against v_g(0).
inline MatchingState matching_initial(const PlanarVec& v_g0, const MatchingModel& m) {
    const double mag = norm(v_g0) * m.eta / m.omega0;
    MatchingState st;
    st.gamma_r = mag > 0.0 ? std::min(std::log(mag), kGammaMax) : kGammaMax;
    st.theta = mag > 0.0 ? angle_of(v_g0) : 0.0;
    return st;
}

struct MatchingOutput {
    PlanarVec m_g;
    MatchingState state;
    double sync_gamma = 0.0;  // gradient contribution to gamma_r'
    double sync_theta = 0.0;  // gradient contribution to theta'
};

struct MatchingStepParams {
    double k_f = 7.54e-3;
    MatchingGainMode mode = MatchingGainMode::Constant;
    double lg = 0.0;
    MatchingModel model;
    std::optional<ComplexImpedance> error_impedance;  // virtual impedance on i - i*
};

/// Forward-Euler step of the matching law. The returned modulation corresponds to the
/// state on entry; the state is then advanced by dt.
inline MatchingOutput matching_step(const MatchingState& st, const PlanarVec& i_g, const PlanarVec& i_star, double v_dc,
                                    const MatchingStepParams& p, double dt) {
    const auto [d_gamma, d_theta] = matching_gradients(st.gamma_r, st.theta, p.model);
    const double k = p.mode == MatchingGainMode::Constant ? p.k_f : p.k_f * std::exp(-2.0 * st.gamma_r);
    const PlanarVec weighted = p.lg * (i_g - i_star);
    const double sync_gamma = -k * dot(d_gamma, weighted);
    const double sync_theta = -k * dot(d_theta, weighted);

    MatchingOutput out;
    out.m_g = matching_modulation(st);
    if (p.error_impedance && v_dc > 0.0)
        out.m_g = circular_sat(out.m_g + p.error_impedance->apply(i_g - i_star) / v_dc, kMaxModulation);
    out.sync_gamma = sync_gamma;
    out.sync_theta = sync_theta;
    out.state.gamma_r = std::min(st.gamma_r + dt * sync_gamma, kGammaMax);
    out.state.theta = st.theta + dt * (sync_theta + p.model.eta * v_dc);
    return out;
}

/// Active power reference taken from the mechanical demand.
inline double matching_power_reference(double tau_m, double w1) { return tau_m * w1; }

/// Tracking energy with the measured current substituted for the steady-state map.
inline double tracking_energy(const PlanarVec& i_g, const PlanarVec& i_star, double lg) {
    return 0.5 * lg * norm_sq(i_g - i_star);
}

}  // namespace driveline
