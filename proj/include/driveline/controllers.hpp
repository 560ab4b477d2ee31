#pragma once

// Stateful controller stacks stepped once per control period by the simulator.
// Both share the speed/DC coupling loop, the AC-voltage compensator and the
// circular current limiter; they differ in how the modulation is produced.

#include <optional>

#include "driveline/cascade_control.hpp"
#include "driveline/matching_control.hpp"
#include "driveline/plant.hpp"
#include "driveline/pll.hpp"

namespace driveline {

enum class VoltageSource { Measured, Pll };

struct ControlParams {
    CascadeGains gains;
    double kappa_pll = 63.0;
    bool pll_dc_coupling = false;
    double k_f = 7.54e-3;
    MatchingGainMode matching_gain = MatchingGainMode::Constant;
    bool matching_error_impedance = true;  // apply Z_v to i - i* in the matching modulation
    double zv_r = 0.8;       // Ohm
    double zv_l = 1e-3;      // H, reactance taken at omega0
    Projection projection = Projection::Hard;
    double v_eps_fraction = 0.01;
    double vg_ref = 0.0;     // V; <= 0 selects the plant's vg_nom
    VoltageSource ff_stiff = VoltageSource::Measured;
    VoltageSource ff_weak = VoltageSource::Pll;

    ComplexImpedance z_v(double omega0) const { return impedance_from_rl(zv_r, zv_l, omega0); }
    double vg_reference(const PlantParams& p) const { return vg_ref > 0.0 ? vg_ref : p.vg_nom; }

    friend bool operator==(const ControlParams&, const ControlParams&) = default;
};

/// Matching gain eta = omega0 / vdc_ref.
inline double matching_gain(const PlantParams& p) { return p.omega0 / p.vdc_ref; }

struct Measurements {
    PlanarVec i_g;
    PlanarVec v_g;
    double v_dc = 0.0;
    double w1 = 0.0;
};

struct ControlOutput {
    PlanarVec m_g;
    double tau_m = 0.0;
    double p_star = 0.0;
    double q_star = 0.0;
    PlanarVec i_star;
    double omega_sync = 0.0;   // PLL frequency, or eta v_dc for matching
    double sync_energy = 0.0;  // U for the PLL, tracking energy for matching
};

/// Speed loop whose reference is the DC-link equivalent speed, with an optional notch on w1.
class SpeedCoupling {
public:
    SpeedCoupling(const PlantParams& plant, const CascadeGains& gains, double dt)
        : plant_(plant), gains_(gains), dt_(dt) {
        if (gains.notch) notch_ = Biquad::notch(*gains.notch, dt);
    }

    /// Presets the integrator so that zero speed error commands `tau0`, and settles the notch at w1.
    void prime(double tau0, double w1) {
        state_.integ = -tau0 / gains_.ki_m(plant_.m_total());
        if (notch_) notch_->settle(w1);
    }

    double step(double w1, double v_dc) {
        const double w_meas = notch_ ? notch_->step(w1) : w1;
        const double w_dc = dc_as_speed(v_dc, plant_.w_nom, plant_.vdc_ref);
        const auto cmd = speed_coupling_step(w_meas, w_dc, state_, gains_, plant_.m_total(), plant_.tau_nom, dt_);
        state_ = cmd.state;
        return cmd.tau_m;
    }

    const PiState& state() const { return state_; }

private:
    PlantParams plant_;
    CascadeGains gains_;
    double dt_;
    PiState state_;
    std::optional<Biquad> notch_;
};

class CascadeController {
public:
    CascadeController(const PlantParams& plant, const ControlParams& params, VoltageSource source, double dt)
        : plant_(plant), params_(params), source_(source), dt_(dt), speed_(plant, params.gains, dt) {
        loop_.kp = params.gains.kp_g(plant.Lg);
        loop_.ki = params.gains.ki_g(plant.Lg);
        loop_.z_g = plant.z_converter();
        loop_.z_v = params.z_v(plant.omega0);
        loop_.vdc_ref = plant.vdc_ref;
    }

    /// Presets every integrator for the operating point in `m`: grid current m.i_g carrying p0,
    /// motor torque tau0.
    void initialize(const Measurements& m, double p0, double tau0) {
        pll_ = pll_initial(m.v_g, v_eps(), {plant_.vg_nom, 0.0}, plant_.omega0);
        speed_.prime(tau0, m.w1);
        dc_.integ = -p0 / (plant_.vdc_ref * params_.gains.ki_dc(plant_.c_tot()));
        // The feed-forward subtracts Z_v i*, which the integrator has to hold in steady state.
        current_.integ = Rotation(pll_.theta_pll).apply_transpose(loop_.z_v.apply(m.i_g)) / loop_.ki;
        i_star_held_ = m.i_g;
    }

    ControlOutput step(const Measurements& m) {
        ControlOutput out;
        out.sync_energy = pll_energy(pll_.v_pll, m.v_g);

        const double omega_ff = params_.pll_dc_coupling ? matching_gain(plant_) * m.v_dc : plant_.omega0;
        pll_ = pll_step_cartesian(pll_, m.v_g, params_.kappa_pll, omega_ff, dt_);
        out.omega_sync = pll_.omega_pll;

        out.tau_m = speed_.step(m.w1, m.v_dc);

        const double v_star = dc_reference(pll_.omega_pll, matching_gain(plant_));
        const auto p_cmd = dc_voltage_step(m.v_dc, v_star, dc_, params_.gains, plant_.c_tot(), plant_.p_nom(),
                                           plant_.vdc_ref, dt_);
        dc_ = p_cmd.state;
        out.p_star = p_cmd.p_star;

        out.q_star = ac_voltage_step(m.v_g, params_.vg_reference(plant_), params_.gains.kp_v, out.p_star,
                                     plant_.i_nom(), params_.projection);

        const PlanarVec v_ctl = source_ == VoltageSource::Measured ? m.v_g : pll_.v_pll;
        out.i_star = current_reference(out.p_star, out.q_star, v_ctl, plant_.i_nom(), v_eps(), i_star_held_);
        i_star_held_ = out.i_star;

        const auto mod = current_control_step(m.i_g, out.i_star, v_ctl, pll_.theta_pll, current_, loop_, dt_);
        current_ = mod.state;
        out.m_g = mod.m_g;
        return out;
    }

    const PllState& pll() const { return pll_; }
    const PiState& dc_state() const { return dc_; }
    const PiVecState& current_state() const { return current_; }

private:
    double v_eps() const { return params_.v_eps_fraction * plant_.vg_nom; }

    PlantParams plant_;
    ControlParams params_;
    VoltageSource source_;
    double dt_;
    SpeedCoupling speed_;
    CurrentLoopGains loop_;
    PllState pll_;
    PiState dc_;
    PiVecState current_;
    PlanarVec i_star_held_;
};

/// Matching controller. Consumes only the measured current, PCC voltage, DC voltage
/// and shaft speed; it carries no PLL.
class MatchingController {
public:
    MatchingController(const PlantParams& plant, const ControlParams& params, double dt)
        : plant_(plant), params_(params), dt_(dt), speed_(plant, params.gains, dt) {
        step_.k_f = params.k_f;
        step_.mode = params.matching_gain;
        step_.lg = plant.Lg;
        step_.model = {plant.z_converter() + params.z_v(plant.omega0), matching_gain(plant), plant.omega0};
        if (params.matching_error_impedance) step_.error_impedance = params.z_v(plant.omega0);
    }

    /// Starts from the modulation that sustains the current m.i_g against m.v_g.
    void initialize(const Measurements& m, double /*p0*/, double tau0) {
        state_ = matching_initial(m.v_g - plant_.z_converter().apply(m.i_g), step_.model);
        speed_.prime(tau0, m.w1);
        i_star_held_ = m.i_g;
    }

    ControlOutput step(const Measurements& m) {
        ControlOutput out;
        out.tau_m = speed_.step(m.w1, m.v_dc);
        out.p_star = matching_power_reference(out.tau_m, m.w1);
        out.q_star = ac_voltage_step(m.v_g, params_.vg_reference(plant_), params_.gains.kp_v, out.p_star,
                                     plant_.i_nom(), params_.projection);
        out.i_star = current_reference(out.p_star, out.q_star, m.v_g, plant_.i_nom(),
                                       params_.v_eps_fraction * plant_.vg_nom, i_star_held_);
        i_star_held_ = out.i_star;

        const auto res = matching_step(state_, m.i_g, out.i_star, m.v_dc, step_, dt_);
        state_ = res.state;
        out.m_g = res.m_g;
        out.omega_sync = step_.model.eta * m.v_dc;
        out.sync_energy = tracking_energy(m.i_g, out.i_star, plant_.Lg);
        return out;
    }

    const MatchingState& state() const { return state_; }
    const MatchingStepParams& step_params() const { return step_; }

private:
    PlantParams plant_;
    ControlParams params_;
    double dt_;
    SpeedCoupling speed_;
    MatchingStepParams step_;
    MatchingState state_;
    PlanarVec i_star_held_;
};

}  // namespace driveline
