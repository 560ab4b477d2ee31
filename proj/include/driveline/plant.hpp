#pragma once

// Average model of a back-to-back drive: Thevenin grid source, grid-side converter
// with series RL filter, DC link (capacitor || conductance), and an N-mass torsional
// shaft driven by the motor torque at mass 1 and loaded at mass N.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "driveline/errors.hpp"
#include "driveline/frames.hpp"

namespace driveline {

struct ShaftCoupling {
    double stiffness = 0.0;  // N m / rad
    double damping = 0.0;    // N m s / rad
    friend bool operator==(const ShaftCoupling&, const ShaftCoupling&) = default;
};

struct PlantParams {
    double Lg = 9e-4;        // H
    double Rg = 1e-2;        // Ohm
    double Cdc = 5e-3;       // F
    double Gdc = 2.3e-4;     // S
    std::vector<double> masses;             // kg m^2, mass 1 carries the motor
    std::vector<ShaftCoupling> couplings;   // between mass i and i+1
    ComplexImpedance z_grid;                // PCC to infinite bus
    double w_nom = 0.0;      // rad/s, shaft
    double vdc_ref = 5000.0; // V
    double vg_nom = 3300.0;  // V, alpha-beta amplitude (power invariant)
    double tau_nom = 0.0;    // N m
    double omega0 = 2.0 * std::numbers::pi * 50.0;
    double alpha_q = 1.2;
    double alpha_v = 1.1;
    double vdc_floor_fraction = 0.01;

    std::size_t mass_count() const { return masses.size(); }
    double p_nom() const { return tau_nom * w_nom; }
    double i_nom() const { return alpha_q * p_nom() / vg_nom; }
    double m_total() const {
        double m = 0.0;
        for (double mi : masses) m += mi;
        return m;
    }
    /// Capacitance seen by the DC regulator once the shaft is coupled to the link.
    double c_tot() const {
        const double k = w_nom / vdc_ref;
        return Cdc + k * k * m_total();
    }
    double vdc_floor() const { return vdc_floor_fraction * vdc_ref; }
    ComplexImpedance z_converter() const { return impedance_from_rl(Rg, Lg, omega0); }

    void validate() const {
        auto positive = [](double v, const char* what) {
            if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be > 0");
        };
        positive(Lg, "Lg");
        positive(Rg, "Rg");
        positive(Cdc, "Cdc");
        positive(w_nom, "w_nom");
        positive(vdc_ref, "vdc_ref");
        positive(vg_nom, "vg_nom");
        positive(tau_nom, "tau_nom");
        positive(omega0, "omega0");
        positive(alpha_q, "alpha_q");
        positive(alpha_v, "alpha_v");
        if (!(Gdc >= 0.0)) throw std::invalid_argument("Gdc must be >= 0");
        if (masses.size() < 2) throw std::invalid_argument("shaft needs at least two masses");
        if (couplings.size() + 1 != masses.size())
            throw std::invalid_argument("shaft needs exactly one coupling per adjacent mass pair");
        for (double m : masses) positive(m, "shaft mass");
        for (const auto& c : couplings) {
            positive(c.stiffness, "shaft stiffness");
            if (!(c.damping >= 0.0)) throw std::invalid_argument("shaft damping must be >= 0");
        }
        if (!(z_grid.r >= 0.0 && z_grid.x >= 0.0)) throw std::invalid_argument("grid impedance must be >= 0");
    }

    friend bool operator==(const PlantParams&, const PlantParams&) = default;
};

struct ShaftSection {
    double x = 0.0;  // rad
    double w = 0.0;  // rad/s
};

/// Continuous plant state. Also used for its time derivative.
struct PlantState {
    PlanarVec i_g;
    double v_dc = 0.0;
    std::vector<ShaftSection> shaft;

    PlantState& operator+=(const PlantState& o) {
        i_g += o.i_g;
        v_dc += o.v_dc;
        for (std::size_t k = 0; k < shaft.size(); ++k) {
            shaft[k].x += o.shaft[k].x;
            shaft[k].w += o.shaft[k].w;
        }
        return *this;
    }
    PlantState& operator*=(double s) {
        i_g *= s;
        v_dc *= s;
        for (auto& sec : shaft) {
            sec.x *= s;
            sec.w *= s;
        }
        return *this;
    }
    friend PlantState operator+(PlantState a, const PlantState& b) { return a += b; }
    friend PlantState operator*(double s, PlantState a) { return a *= s; }

    bool finite() const {
        if (!is_finite(i_g) || !std::isfinite(v_dc)) return false;
        return std::all_of(shaft.begin(), shaft.end(),
                           [](const ShaftSection& s) { return std::isfinite(s.x) && std::isfinite(s.w); });
    }
};

struct PlantInputs {
    PlanarVec m_g;
    double tau_m = 0.0;
    double tau_l = 0.0;
    PlanarVec v_inf;
};

/// PCC voltage behind the grid impedance: v_g = v_inf - Z_grid i_g.
inline PlanarVec pcc_voltage(const PlantState& s, const PlanarVec& v_inf, const PlantParams& p) {
    return v_inf - p.z_grid.apply(s.i_g);
}

/// Torque transmitted by coupling k (positive when mass k drives mass k+1).
inline double coupling_torque(const PlantState& s, const PlantParams& p, std::size_t k) {
    const auto& c = p.couplings[k];
    return c.stiffness * (s.shaft[k].x - s.shaft[k + 1].x) + c.damping * (s.shaft[k].w - s.shaft[k + 1].w);
}

/// Right-hand side of the plant ODE. Throws DcCollapse (time -1) when v_dc is at or below the floor.
inline PlantState derivative(const PlantState& s, const PlantInputs& u, const PlantParams& p) {
    if (!(s.v_dc > p.vdc_floor())) throw DcCollapse(-1.0, s.v_dc);
    if (norm(u.m_g) > kMaxModulation * (1.0 + 1e-12))
        throw std::invalid_argument("modulation exceeds the 1/sqrt(2) bound");

    const std::size_t n = s.shaft.size();
    PlantState d;
    d.shaft.resize(n);

    const PlanarVec v_g = pcc_voltage(s, u.v_inf, p);
    d.i_g = (v_g - p.Rg * s.i_g - s.v_dc * u.m_g) / p.Lg;

    const double w1 = s.shaft[0].w;
    d.v_dc = (-p.Gdc * s.v_dc + dot(u.m_g, s.i_g) - u.tau_m * w1 / s.v_dc) / p.Cdc;

    std::vector<double> torque(n, 0.0);
    torque[0] += u.tau_m;
    torque[n - 1] -= u.tau_l;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double t = coupling_torque(s, p, k);
        torque[k] -= t;
        torque[k + 1] += t;
    }
    for (std::size_t k = 0; k < n; ++k) {
        d.shaft[k].x = s.shaft[k].w;
        d.shaft[k].w = torque[k] / p.masses[k];
    }
    return d;
}

inline double stored_energy(const PlantState& s, const PlantParams& p) {
    double e = 0.5 * p.Lg * norm_sq(s.i_g) + 0.5 * p.Cdc * s.v_dc * s.v_dc;
    for (std::size_t k = 0; k < s.shaft.size(); ++k) e += 0.5 * p.masses[k] * s.shaft[k].w * s.shaft[k].w;
    for (std::size_t k = 0; k + 1 < s.shaft.size(); ++k) {
        const double twist = s.shaft[k].x - s.shaft[k + 1].x;
        e += 0.5 * p.couplings[k].stiffness * twist * twist;
    }
    return e;
}

/// Natural frequencies (Hz) of the undamped free-free shaft, ascending, rigid-body mode removed.
inline std::vector<double> torsional_frequencies(const PlantParams& p) {
    const auto n = static_cast<Eigen::Index>(p.masses.size());
    if (n < 2) throw std::invalid_argument("shaft needs at least two masses");
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double kk = p.couplings[static_cast<std::size_t>(i)].stiffness;
        k(i, i) += kk;
        k(i + 1, i + 1) += kk;
        k(i, i + 1) -= kk;
        k(i + 1, i) -= kk;
    }
    Eigen::VectorXd inv_sqrt_m(n);
    for (Eigen::Index i = 0; i < n; ++i) inv_sqrt_m(i) = 1.0 / std::sqrt(p.masses[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd sym = inv_sqrt_m.asDiagonal() * k * inv_sqrt_m.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
    std::vector<double> f;
    const auto& ev = solver.eigenvalues();  // ascending, ev(0) is the rigid mode
    for (Eigen::Index i = 1; i < n; ++i) f.push_back(std::sqrt(std::max(ev(i), 0.0)) / (2.0 * std::numbers::pi));
    return f;
}

/// Shaft at uniform speed w, twisted so that a steady torque `tau` is transmitted end to end.
inline std::vector<ShaftSection> twisted_shaft(const PlantParams& p, double w, double tau) {
    std::vector<ShaftSection> shaft(p.mass_count());
    double x = 0.0;
    for (std::size_t k = 0; k < shaft.size(); ++k) {
        shaft[k] = {x, w};
        if (k + 1 < shaft.size()) x -= tau / p.couplings[k].stiffness;
    }
    return shaft;
}

}  // namespace driveline
