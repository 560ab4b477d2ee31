#pragma once

// Modified cascaded-PI grid-side stack: speed loop recast as a DC-link coupling,
// DC-link droop on the PLL frequency, AC-voltage reactive compensation, circular
// current limiting, and a current loop integrating in the rotating frame.
//
// All PI blocks are forward-Euler at the control rate with conditional-integration
// anti-windup: the integrator is frozen while the output is saturated and the
// current error would push it further into saturation.

#include <cmath>
#include <numbers>
#include <optional>

#include "driveline/frames.hpp"

namespace driveline {

struct PiState {
    double integ = 0.0;
    bool saturated = false;
};

struct PiVecState {
    PlanarVec integ;  // dq frame
    bool saturated = false;
};

/// Notch on the measured speed at a torsional natural frequency.
struct NotchSpec {
    double f0 = 5.5;     // Hz
    double depth = 0.1;  // gain at f0
    double width = 0.5;  // pole damping ratio
    friend bool operator==(const NotchSpec&, const NotchSpec&) = default;
};

struct CascadeGains {
    double zeta_m = 1.0;
    double omega_m = 2.0;       // rad/s
    double zeta_dc = 1.0;
    double omega_dc = 2.0;      // rad/s
    double zeta_g = 1.0;
    double omega_g = 1500.0;    // rad/s
    double kp_v = 3.0;          // var / V^2
    std::optional<NotchSpec> notch;

    double kp_m(double m_total) const { return 2.0 * zeta_m * omega_m * m_total; }
    double ki_m(double m_total) const { return omega_m * omega_m * m_total; }
    double kp_dc(double c_tot) const { return 2.0 * zeta_dc * omega_dc * c_tot; }
    double ki_dc(double c_tot) const { return omega_dc * omega_dc * c_tot; }
    double kp_g(double lg) const { return 2.0 * zeta_g * omega_g * lg; }
    double ki_g(double lg) const { return omega_g * omega_g * lg; }

    friend bool operator==(const CascadeGains&, const CascadeGains&) = default;
};

/// Second-order IIR section, direct form II transposed.
class Biquad {
public:
    Biquad() = default;
    Biquad(double b0, double b1, double b2, double a1, double a2) : b0_(b0), b1_(b1), b2_(b2), a1_(a1), a2_(a2) {}

    /// Tustin-discretized notch (s^2 + 2 z d w s + w^2) / (s^2 + 2 z w s + w^2), prewarped at f0.
    static Biquad notch(const NotchSpec& n, double dt) {
        const double w = 2.0 * std::numbers::pi * n.f0;
        const double k = w / std::tan(w * dt / 2.0);
        const double zp = n.width;
        const double zz = n.width * n.depth;
        const double a0 = k * k + 2.0 * zp * w * k + w * w;
        return Biquad((k * k + 2.0 * zz * w * k + w * w) / a0, (2.0 * w * w - 2.0 * k * k) / a0,
                      (k * k - 2.0 * zz * w * k + w * w) / a0, (2.0 * w * w - 2.0 * k * k) / a0,
                      (k * k - 2.0 * zp * w * k + w * w) / a0);
    }

    /// Sets the internal state so that a constant input u produces a constant output u.
    void settle(double u) {
        const double y = u * (b0_ + b1_ + b2_) / (1.0 + a1_ + a2_);
        s1_ = y - b0_ * u;
        s2_ = b2_ * u - a2_ * y;
    }

    double step(double u) {
        const double y = b0_ * u + s1_;
        s1_ = b1_ * u - a1_ * y + s2_;
        s2_ = b2_ * u - a2_ * y;
        return y;
    }

private:
    double b0_ = 1.0, b1_ = 0.0, b2_ = 0.0, a1_ = 0.0, a2_ = 0.0;
    double s1_ = 0.0, s2_ = 0.0;
};

namespace detail {

/// One conditional-integration step of a scalar PI whose output is sat(-kp e - ki integ) * scale.
inline Saturated pi_negative_step(double e, PiState& st, double kp, double ki, double scale, double lim, double dt) {
    const double raw = (-kp * e - ki * st.integ) * scale;
    const Saturated out = scalar_sat(raw, lim);
    // Integrating e moves the output by -ki * e * scale.
    const bool outward = out.saturated && ((-ki * e * scale) * raw > 0.0);
    if (!outward) st.integ += e * dt;
    st.saturated = out.saturated;
    return out;
}

}  // namespace detail

/// Maps the DC-link voltage onto an equivalent shaft speed.
inline double dc_as_speed(double v_dc, double w_ref, double vdc_ref) { return (w_ref / vdc_ref) * v_dc; }

struct TorqueCommand {
    double tau_m = 0.0;
    PiState state;
};

/// Speed PI with its reference replaced by the DC-link equivalent speed.
inline TorqueCommand speed_coupling_step(double w1, double w_dc, PiState st, const CascadeGains& g, double m_total,
                                         double tau_nom, double dt) {
    const auto out = detail::pi_negative_step(w1 - w_dc, st, g.kp_m(m_total), g.ki_m(m_total), 1.0, tau_nom, dt);
    return {out.value, st};
}

/// DC-link voltage reference drooped on the PLL frequency.
inline double dc_reference(double omega_pll, double eta) { return omega_pll / eta; }

struct PowerCommand {
    double p_star = 0.0;
    PiState state;
};

inline PowerCommand dc_voltage_step(double v_dc, double v_dc_star, PiState st, const CascadeGains& g, double c_tot,
                                    double p_nom, double vdc_ref, double dt) {
    const auto out =
        detail::pi_negative_step(v_dc - v_dc_star, st, g.kp_dc(c_tot), g.ki_dc(c_tot), vdc_ref, p_nom, dt);
    return {out.value, st};
}

enum class Projection { Hard, Smooth };

/// Largest |Q| compatible with the current limit once P* is served.
inline double reactive_headroom(double p_star, double v_norm, double i_nom) {
    const double s = i_nom * v_norm;
    return std::sqrt(std::max(0.0, s * s - p_star * p_star));
}

/// Reactive power reference for PCC voltage support, projected onto the current-feasible set.
inline double ac_voltage_step(const PlanarVec& v_g, double vg_ref, double kp_v, double p_star, double i_nom,
                              Projection mode = Projection::Hard) {
    const double raw = kp_v * (norm_sq(v_g) - vg_ref * vg_ref);
    const double q_max = reactive_headroom(p_star, norm(v_g), i_nom);
    if (mode == Projection::Smooth) return q_max > 0.0 ? q_max * std::tanh(raw / q_max) : 0.0;
    return std::clamp(raw, -q_max, q_max);
}

/// Current reference realizing (P*, Q*) at voltage v, circularly limited at i_nom.
/// Below v_eps the previous reference is held (and limited).
inline PlanarVec current_reference(double p_star, double q_star, const PlanarVec& v, double i_nom, double v_eps,
                                   const PlanarVec& held = {}) {
    const double n2 = norm_sq(v);
    if (!(n2 > v_eps * v_eps)) return circular_sat(held, i_nom);
    const PlanarVec unlimited = (p_star * v - q_star * perp(v)) / n2;
    return circular_sat(unlimited, i_nom);
}

struct CurrentLoopGains {
    double kp = 0.0;
    double ki = 0.0;
    ComplexImpedance z_g;
    ComplexImpedance z_v;
    double vdc_ref = 0.0;
};

struct ModulationCommand {
    PlanarVec m_g;
    PiVecState state;
};

/// Current PI with the integral kept in the frame rotating at theta, plus voltage feed-forward.
inline ModulationCommand current_control_step(const PlanarVec& i_g, const PlanarVec& i_star, const PlanarVec& v_ff,
                                              double theta, PiVecState st, const CurrentLoopGains& g, double dt) {
    const Rotation r(theta);
    const PlanarVec err = i_g - i_star;
    const PlanarVec raw = g.kp * err + g.ki * r.apply(st.integ) + v_ff - (g.z_g + g.z_v).apply(i_star);
    const PlanarVec m_raw = raw / g.vdc_ref;
    const PlanarVec m = circular_sat(m_raw, kMaxModulation);
    const bool saturated = norm(m_raw) > kMaxModulation;
    const PlanarVec d_integ = r.apply_transpose(err) * dt;
    const bool outward = saturated && dot(r.apply(d_integ), raw) > 0.0;
    if (!outward) st.integ += d_integ;
    st.saturated = saturated;
    return {m, st};
}

}  // namespace driveline
