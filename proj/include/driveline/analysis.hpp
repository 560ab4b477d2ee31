#pragma once

// Offline analysis: the DC-mass equivalence of the speed coupling, linearization of the
// coupled DC link for frequency responses, and per-run trace metrics.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "driveline/cascade_control.hpp"
#include "driveline/errors.hpp"
#include "driveline/plant.hpp"
#include "driveline/scenario.hpp"
#include "driveline/simulation.hpp"

namespace driveline {

// ---------------------------------------------------------------------------
// DC-mass equivalence
// ---------------------------------------------------------------------------

/// Open-loop excitation shared by both models of the equivalence check.
struct EquivalenceInputs {
    std::function<PlanarVec(double)> m_g;
    std::function<PlanarVec(double)> v_g;
    std::function<double(double)> tau_l;
};

/// Plant with the speed PI closed around w1 - w_dc, the integrator x_m carried as a state.
struct CoupledState {
    PlantState plant;
    double x_m = 0.0;

    friend CoupledState operator+(CoupledState a, const CoupledState& b) {
        a.plant += b.plant;
        a.x_m += b.x_m;
        return a;
    }
    friend CoupledState operator*(double s, CoupledState a) {
        a.plant *= s;
        a.x_m *= s;
        return a;
    }
};

/// DC link written as an extra rotating mass at index 0 (angle x0, speed w_dc) ahead of the shaft.
struct DcMassState {
    PlanarVec i_g;
    double x0 = 0.0;
    double w_dc = 0.0;
    std::vector<ShaftSection> shaft;

    friend DcMassState operator+(DcMassState a, const DcMassState& b) {
        a.i_g += b.i_g;
        a.x0 += b.x0;
        a.w_dc += b.w_dc;
        for (std::size_t k = 0; k < a.shaft.size(); ++k) {
            a.shaft[k].x += b.shaft[k].x;
            a.shaft[k].w += b.shaft[k].w;
        }
        return a;
    }
    friend DcMassState operator*(double s, DcMassState a) {
        a.i_g *= s;
        a.x0 *= s;
        a.w_dc *= s;
        for (auto& sec : a.shaft) {
            sec.x *= s;
            sec.w *= s;
        }
        return a;
    }
};

/// Right-hand side of the plant with the coupling speed loop, saturation disabled.
inline CoupledState coupled_derivative(double t, const CoupledState& s, const PlantParams& p, const CascadeGains& g,
                                       const EquivalenceInputs& in) {
    const double k = p.w_nom / p.vdc_ref;
    const double w1 = s.plant.shaft[0].w;
    const double e = w1 - k * s.plant.v_dc;
    const double tau_m = -g.kp_m(p.m_total()) * e - g.ki_m(p.m_total()) * s.x_m;
    PlantParams q = p;
    q.z_grid = {};
    CoupledState d;
    d.plant = derivative(s.plant, {in.m_g(t), tau_m, in.tau_l(t), in.v_g(t)}, q);
    d.x_m = e;
    return d;
}

/// Right-hand side of the DC-mass chain. The coupling spring and damper carry the factor
/// w1 / w_dc on the DC-mass side only; the ground damper G / k^2 is the link conductance.
inline DcMassState dc_mass_derivative(double t, const DcMassState& s, const PlantParams& p, const CascadeGains& g,
                                      const EquivalenceInputs& in) {
    const double k = p.w_nom / p.vdc_ref;
    const double m_dc = p.Cdc / (k * k);
    const double kp = g.kp_m(p.m_total());
    const double ki = g.ki_m(p.m_total());
    const std::size_t n = s.shaft.size();
    const double w1 = s.shaft[0].w;
    const double ratio = w1 / s.w_dc;
    const PlanarVec m = in.m_g(t);

    DcMassState d;
    d.shaft.resize(n);
    d.i_g = (in.v_g(t) - p.Rg * s.i_g - (1.0 / k) * m * s.w_dc) / p.Lg;
    d.x0 = s.w_dc;
    const double tau_g = dot(m, s.i_g) / k;
    d.w_dc = (-(p.Gdc / (k * k)) * s.w_dc - ratio * kp * (s.w_dc - w1) - ratio * ki * (s.x0 - s.shaft[0].x) + tau_g) /
             m_dc;

    std::vector<double> torque(n, 0.0);
    torque[0] = -kp * (w1 - s.w_dc) - ki * (s.shaft[0].x - s.x0);
    torque[n - 1] -= in.tau_l(t);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const auto& c = p.couplings[j];
        const double tq = c.stiffness * (s.shaft[j].x - s.shaft[j + 1].x) + c.damping * (s.shaft[j].w - s.shaft[j + 1].w);
        torque[j] -= tq;
        torque[j + 1] += tq;
    }
    for (std::size_t j = 0; j < n; ++j) {
        d.shaft[j].x = s.shaft[j].w;
        d.shaft[j].w = torque[j] / p.masses[j];
    }
    return d;
}

struct EquivalenceReport {
    double max_rel_error = 0.0;  // worst component, sup over time, relative to that component's sup
    std::string worst_state;
    double max_abs_tau_m = 0.0;  // confirms the torque saturation was never reached
    std::size_t steps = 0;
};

/// Integrates both forms from the same initial condition with the same RK4 step and
/// compares them after mapping v_dc = w_dc / k and x_m = x1 - x0.
inline EquivalenceReport dc_mass_equivalence(const PlantParams& p, const CascadeGains& g, const CoupledState& x0,
                                             const EquivalenceInputs& in, double duration, double dt) {
    const double k = p.w_nom / p.vdc_ref;
    const std::size_t n = x0.plant.shaft.size();
    CoupledState a = x0;
    DcMassState b;
    b.i_g = x0.plant.i_g;
    b.w_dc = k * x0.plant.v_dc;
    b.x0 = x0.plant.shaft[0].x - x0.x_m;
    b.shaft = x0.plant.shaft;

    const std::size_t ncomp = 4 + 2 * n;
    std::vector<double> max_diff(ncomp, 0.0), max_mag(ncomp, 0.0);
    std::vector<std::string> names{"i_alpha", "i_beta", "v_dc", "x_m"};
    for (std::size_t j = 0; j < n; ++j) {
        names.push_back("x" + std::to_string(j + 1));
        names.push_back("w" + std::to_string(j + 1));
    }
    EquivalenceReport rep;

    auto compare = [&](double t) {
        const double kp = g.kp_m(p.m_total());
        const double ki = g.ki_m(p.m_total());
        rep.max_abs_tau_m = std::max(
            rep.max_abs_tau_m, std::abs(-kp * (a.plant.shaft[0].w - k * a.plant.v_dc) - ki * a.x_m));
        (void)t;
        std::vector<double> va{a.plant.i_g.x, a.plant.i_g.y, a.plant.v_dc, a.x_m};
        std::vector<double> vb{b.i_g.x, b.i_g.y, b.w_dc / k, b.shaft[0].x - b.x0};
        for (std::size_t j = 0; j < n; ++j) {
            va.push_back(a.plant.shaft[j].x);
            va.push_back(a.plant.shaft[j].w);
            vb.push_back(b.shaft[j].x);
            vb.push_back(b.shaft[j].w);
        }
        for (std::size_t c = 0; c < ncomp; ++c) {
            max_diff[c] = std::max(max_diff[c], std::abs(va[c] - vb[c]));
            max_mag[c] = std::max(max_mag[c], std::abs(va[c]));
        }
    };

    const auto steps = static_cast<std::size_t>(std::lround(duration / dt));
    compare(0.0);
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) * dt;
        a = rk4_step(a, t, dt, [&](double tt, const CoupledState& x) { return coupled_derivative(tt, x, p, g, in); });
        b = rk4_step(b, t, dt, [&](double tt, const DcMassState& x) { return dc_mass_derivative(tt, x, p, g, in); });
        compare(t + dt);
    }
    for (std::size_t c = 0; c < ncomp; ++c) {
        const double rel = max_diff[c] / std::max(max_mag[c], std::numeric_limits<double>::min());
        if (rel >= rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_state = names[c];
        }
    }
    rep.steps = steps;
    return rep;
}

// ---------------------------------------------------------------------------
// Linearization of the coupled DC link
// ---------------------------------------------------------------------------

struct LinearModel {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;
    Eigen::VectorXd x_op;
    Eigen::VectorXd u_op;
    std::vector<std::string> state_names;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    double residual_pu = 0.0;  // scaled derivative norm at the operating point

    bool consistent() const {
        const auto n = A.rows();
        return A.cols() == n && B.rows() == n && C.cols() == n && x_op.size() == n && u_op.size() == B.cols() &&
               static_cast<Eigen::Index>(state_names.size()) == n &&
               static_cast<Eigen::Index>(input_names.size()) == B.cols() &&
               static_cast<Eigen::Index>(output_names.size()) == C.rows();
    }
};

struct LinearizeOptions {
    bool coupled = true;     // speed loop referenced to the DC link; otherwise to w_nom
    double load_pu = 0.0;    // load torque at the operating point
    double rel_step = 1e-6;  // finite-difference step in per-unit coordinates
};

namespace detail {

/// Reduced DC-link/shaft model: x = [v_dc, x_m, w_1..w_N, d_1..d_{N-1}] with d_k the twist
/// of coupling k. The single input is a current injected into the DC node.
struct DcShaftModel {
    PlantParams p;
    CascadeGains g;
    LinearizeOptions opt;

    std::size_t n() const { return p.mass_count(); }
    std::size_t dim() const { return 2 + n() + (n() - 1); }

    Eigen::VectorXd scales() const {
        Eigen::VectorXd s(static_cast<Eigen::Index>(dim()));
        s(0) = p.vdc_ref;
        s(1) = p.tau_nom / g.ki_m(p.m_total());
        for (std::size_t j = 0; j < n(); ++j) s(static_cast<Eigen::Index>(2 + j)) = p.w_nom;
        for (std::size_t j = 0; j + 1 < n(); ++j)
            s(static_cast<Eigen::Index>(2 + n() + j)) = p.tau_nom / p.couplings[j].stiffness;
        return s;
    }
    double input_scale() const { return p.p_nom() / p.vdc_ref; }

    Eigen::VectorXd rhs(const Eigen::VectorXd& x, double i_dc) const {
        const std::size_t nm = n();
        const double k = p.w_nom / p.vdc_ref;
        const double v = x(0);
        const double w1 = x(2);
        const double ref = opt.coupled ? k * v : p.w_nom;
        const double e = w1 - ref;
        const double tau_m = -g.kp_m(p.m_total()) * e - g.ki_m(p.m_total()) * x(1);
        Eigen::VectorXd d(x.size());
        d(0) = (-p.Gdc * v + i_dc - tau_m * w1 / v) / p.Cdc;
        d(1) = e;
        std::vector<double> torque(nm, 0.0);
        torque[0] = tau_m;
        torque[nm - 1] -= opt.load_pu * p.tau_nom;
        for (std::size_t j = 0; j + 1 < nm; ++j) {
            const auto& c = p.couplings[j];
            const auto jj = static_cast<Eigen::Index>(j);
            const double tq = c.stiffness * x(static_cast<Eigen::Index>(2 + nm) + jj) + c.damping * (x(2 + jj) - x(3 + jj));
            torque[j] -= tq;
            torque[j + 1] += tq;
        }
        for (std::size_t j = 0; j < nm; ++j) d(static_cast<Eigen::Index>(2 + j)) = torque[j] / p.masses[j];
        for (std::size_t j = 0; j + 1 < nm; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            d(static_cast<Eigen::Index>(2 + nm) + jj) = x(2 + jj) - x(3 + jj);
        }
        return d;
    }
};

}  // namespace detail

/// Finds the operating point with v_dc = vdc_ref by damped Newton on the unknowns
/// (x_m, w, twists, i_dc), then forms A, B, C by central differences.
inline LinearModel linearize(const PlantParams& p, const CascadeGains& g, const LinearizeOptions& opt = {}) {
    p.validate();
    detail::DcShaftModel mdl{p, g, opt};
    const auto dim = static_cast<Eigen::Index>(mdl.dim());
    const Eigen::VectorXd sc = mdl.scales();
    const double su = mdl.input_scale();

    // Unknown vector z (scaled): entries 1..dim-1 of x, then i_dc. v_dc is pinned.
    auto unpack = [&](const Eigen::VectorXd& z, Eigen::VectorXd& x, double& i_dc) {
        x.resize(dim);
        x(0) = p.vdc_ref;
        for (Eigen::Index j = 1; j < dim; ++j) x(j) = z(j - 1) * sc(j);
        i_dc = z(dim - 1) * su;
    };
    auto residual = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd x;
        double i_dc = 0.0;
        unpack(z, x, i_dc);
        return Eigen::VectorXd(mdl.rhs(x, i_dc).cwiseQuotient(sc));
    };

    Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
    for (std::size_t j = 0; j < mdl.n(); ++j) z(static_cast<Eigen::Index>(1 + j)) = 1.0;  // w = w_nom
    Eigen::VectorXd r = residual(z);
    for (int it = 0; it < 100 && r.norm() >= 1e-12; ++it) {
        Eigen::MatrixXd jac(dim, dim);
        for (Eigen::Index c = 0; c < dim; ++c) {
            Eigen::VectorXd zp = z, zm = z;
            zp(c) += 1e-6;
            zm(c) -= 1e-6;
            jac.col(c) = (residual(zp) - residual(zm)) / 2e-6;
        }
        const Eigen::VectorXd step = jac.fullPivLu().solve(-r);
        if (!step.allFinite()) break;
        double lambda = 1.0;
        Eigen::VectorXd trial;
        Eigen::VectorXd rt;
        for (int ls = 0; ls < 30; ++ls, lambda *= 0.5) {
            trial = z + lambda * step;
            rt = residual(trial);
            if (rt.norm() < r.norm()) break;
        }
        if (!(rt.norm() < r.norm())) break;
        z = trial;
        r = rt;
    }
    if (!(r.norm() < 1e-8)) throw NoEquilibrium("trim did not converge: residual " + std::to_string(r.norm()));

    LinearModel lm;
    double i_dc = 0.0;
    unpack(z, lm.x_op, i_dc);
    lm.u_op = Eigen::VectorXd::Constant(1, i_dc);
    lm.residual_pu = r.norm();

    lm.A.resize(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
        const double h = opt.rel_step * sc(c);
        Eigen::VectorXd xp = lm.x_op, xm = lm.x_op;
        xp(c) += h;
        xm(c) -= h;
        lm.A.col(c) = (mdl.rhs(xp, i_dc) - mdl.rhs(xm, i_dc)) / (2.0 * h);
    }
    const double hu = opt.rel_step * su;
    lm.B = (mdl.rhs(lm.x_op, i_dc + hu) - mdl.rhs(lm.x_op, i_dc - hu)) / (2.0 * hu);
    lm.C = Eigen::MatrixXd::Zero(1, dim);
    lm.C(0, 0) = 1.0;

    lm.state_names = {"v_dc", "x_m"};
    for (std::size_t j = 0; j < mdl.n(); ++j) lm.state_names.push_back("w" + std::to_string(j + 1));
    for (std::size_t j = 0; j + 1 < mdl.n(); ++j)
        lm.state_names.push_back("twist" + std::to_string(j + 1) + std::to_string(j + 2));
    lm.input_names = {"i_dc"};
    lm.output_names = {"v_dc"};
    return lm;
}

struct FrequencyPoint {
    double hz = 0.0;
    double gain_db = 0.0;  // +inf when jwI - A is singular
    double phase_deg = 0.0;
    std::complex<double> h;
};

/// C (jwI - A)^-1 B for output `out` and input `in`.
inline std::vector<FrequencyPoint> frequency_response(const LinearModel& m, const std::vector<double>& freqs_hz,
                                                      Eigen::Index out = 0, Eigen::Index in = 0) {
    using CMat = Eigen::MatrixXcd;
    const auto n = m.A.rows();
    std::vector<FrequencyPoint> res;
    res.reserve(freqs_hz.size());
    for (double f : freqs_hz) {
        if (!(f > 0.0)) throw std::invalid_argument("frequencies must be > 0");
        const std::complex<double> s(0.0, 2.0 * std::numbers::pi * f);
        CMat M = s * CMat::Identity(n, n) - m.A.cast<std::complex<double>>();
        Eigen::FullPivLU<CMat> lu(M);
        FrequencyPoint pt;
        pt.hz = f;
        if (!lu.isInvertible()) {
            pt.gain_db = std::numeric_limits<double>::infinity();
            pt.h = {std::numeric_limits<double>::infinity(), 0.0};
        } else {
            const Eigen::VectorXcd x = lu.solve(m.B.col(in).cast<std::complex<double>>());
            pt.h = (m.C.row(out).cast<std::complex<double>>() * x)(0);
            pt.gain_db = 20.0 * std::log10(std::abs(pt.h));
            pt.phase_deg = std::arg(pt.h) * 180.0 / std::numbers::pi;
        }
        res.push_back(pt);
    }
    return res;
}

/// Logarithmically spaced frequencies.
inline std::vector<double> log_frequencies(double f_lo, double f_hi, std::size_t count) {
    std::vector<double> f(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double a = count > 1 ? static_cast<double>(k) / static_cast<double>(count - 1) : 0.0;
        f[k] = f_lo * std::pow(f_hi / f_lo, a);
    }
    return f;
}

/// Zeros of the v_dc response to DC current injection. The input enters only the v_dc row
/// and the output reads only v_dc, so the zeros are the eigenvalues of A without that row
/// and column. Returned in Hz (complex).
inline std::vector<std::complex<double>> transmission_zeros(const LinearModel& m) {
    const auto n = m.A.rows();
    Eigen::MatrixXd r = m.A.bottomRightCorner(n - 1, n - 1);
    Eigen::EigenSolver<Eigen::MatrixXd> es(r);
    std::vector<std::complex<double>> z;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
        z.push_back(es.eigenvalues()(k) / (2.0 * std::numbers::pi));
    return z;
}

/// Capacitance seen from the DC node at frequency f: Im(1/H(jw)) / w.
inline double effective_capacitance(const LinearModel& m, double f_hz) {
    const auto pt = frequency_response(m, {f_hz}).front();
    return std::imag(1.0 / pt.h) / (2.0 * std::numbers::pi * f_hz);
}

/// Coefficients of the DC regulator written on omega = eta v_dc and theta = eta x_dc.
/// The controller's contribution to (C_tot / eta^2) d omega/dt is T = P* / omega.
struct DcDynamicsCoefficients {
    double d_omega = 0.0;  // dT/d omega, finite difference
    double d_theta = 0.0;  // dT/d theta, finite difference
    double expected_d_omega = 0.0;  // -K_p,dc / eta^2
    double expected_d_theta = 0.0;  // -K_i,dc / eta^2
};

inline DcDynamicsCoefficients dc_dynamics_coefficients(const PlantParams& p, const CascadeGains& g) {
    const double eta = p.omega0 / p.vdc_ref;
    const double c_tot = p.c_tot();
    // Operating point: locked PLL at omega0, v_dc at its reference, zero integrator, P* = 0.
    auto torque = [&](double omega, double theta) {
        const double v = omega / eta;
        PiState st;
        st.integ = theta / eta;
        const auto cmd = dc_voltage_step(v, dc_reference(p.omega0, eta), st, g, c_tot,
                                         std::numeric_limits<double>::infinity(), p.vdc_ref, 0.0);
        return cmd.p_star / omega;
    };
    const double w0 = p.omega0;
    const double hw = 1e-6 * w0;
    const double ht = 1e-6;
    DcDynamicsCoefficients c;
    c.d_omega = (torque(w0 + hw, 0.0) - torque(w0 - hw, 0.0)) / (2.0 * hw);
    c.d_theta = (torque(w0, ht) - torque(w0, -ht)) / (2.0 * ht);
    c.expected_d_omega = -g.kp_dc(c_tot) / (eta * eta);
    c.expected_d_theta = -g.ki_dc(c_tot) / (eta * eta);
    return c;
}

// ---------------------------------------------------------------------------
// Trace metrics
// ---------------------------------------------------------------------------

/// Root-mean-square of the component at frequency f over samples spaced dt, using a
/// single DFT bin on the largest whole number of periods of f_base that fits. With f an
/// integer multiple of f_base, the other harmonics of f_base fall on orthogonal bins.
inline double tone_rms(const std::vector<double>& x, double dt, double f, double f_base = 0.0) {
    if (x.empty() || !(dt > 0.0) || !(f > 0.0)) return 0.0;
    const double period = 1.0 / (f_base > 0.0 ? f_base : f);
    const auto per = static_cast<std::size_t>(std::floor(static_cast<double>(x.size()) * dt / period + 1e-9));
    std::size_t n = per > 0 ? static_cast<std::size_t>(std::lround(static_cast<double>(per) * period / dt)) : x.size();
    n = std::min(n, x.size());
    if (n == 0) return 0.0;
    double a = 0.0, b = 0.0;
    const double w = 2.0 * std::numbers::pi * f;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt;
        a += x[k] * std::cos(w * t);
        b += x[k] * std::sin(w * t);
    }
    a *= 2.0 / static_cast<double>(n);
    b *= 2.0 / static_cast<double>(n);
    return std::sqrt(a * a + b * b) / std::numbers::sqrt2;
}

/// Time after t_event until the signal stays within band of its final value; 0 when it
/// never leaves the band. The final value is the mean over the last `tail` seconds.
inline double settling_time(const std::vector<double>& t, const std::vector<double>& x, double t_event, double band,
                            double tail) {
    if (t.empty()) return 0.0;
    const double t_end = t.back();
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= t_end - tail) {
            sum += x[k];
            ++cnt;
        }
    const double final_value = cnt ? sum / static_cast<double>(cnt) : x.back();
    double last_out = t_event;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= t_event && std::abs(x[k] - final_value) > band) last_out = t[k];
    return last_out - t_event;
}

/// Mean of x over the absolute time window [a, b).
inline double window_mean(const std::vector<double>& t, const std::vector<double>& x, double a, double b) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= a && t[k] < b) {
            sum += x[k];
            ++cnt;
        }
    return cnt ? sum / static_cast<double>(cnt) : std::numeric_limits<double>::quiet_NaN();
}

struct TraceMetrics {
    // Extremes over the post-warm-up window.
    double i_max_pu = 0.0;
    double m_max = 0.0;
    double vdc_min_pu = 0.0;
    double vdc_max_pu = 0.0;
    double tau_m_max_abs_pu = 0.0;
    bool finite = true;

    double vdc_overshoot_pct = 0.0;  // largest departure from the pre-event value, % of vdc_ref
    double vdc_settling_s = 0.0;     // 2%-of-step band around the final value
    double p_before_pu = 0.0;
    double p_after_pu = 0.0;
    double q_before_pu = 0.0;
    double q_after_pu = 0.0;
    double pm_before_pu = 0.0;  // drivetrain power tau_m w1
    double pm_after_pu = 0.0;
    double vdc_h2_rms = 0.0;    // V, at twice the grid frequency
    double sync_peak = 0.0;     // peak of the synchronization energy after the first event
    double sync_lock_s = -1.0;  // time from the event until it first drops below 1e-4 of the peak
};

struct MetricWindows {
    double event = 0.0;      // absolute time of the first event
    double fault_end = 0.0;  // absolute end of the first timed fault (== event when none)
    double end = 0.0;
};

inline MetricWindows metric_windows(const SimTrace& tr, const ScenarioScript& script) {
    MetricWindows w;
    const auto& t = tr.column("t");
    w.end = t.empty() ? 0.0 : t.back();
    w.event = tr.event_origin + (script.events.empty() ? 0.0 : script.events.front().t);
    w.fault_end = w.event;
    if (!script.events.empty()) {
        std::visit(
            [&](const auto& e) {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, ThreePhaseDrop> || std::is_same_v<E, VoltageDip> ||
                              std::is_same_v<E, SinglePhaseDrop>) {
                    w.fault_end = e.duration > 0.0 ? w.event + e.duration : w.end;
                }
            },
            script.events.front().kind);
    }
    return w;
}

inline TraceMetrics trace_metrics(const SimTrace& tr, const ScenarioScript& script, const PlantParams& p) {
    TraceMetrics m;
    if (tr.rows() == 0) return m;
    const auto& t = tr.column("t");
    const auto& i = tr.column("i_norm");
    const auto& mm = tr.column("m_norm");
    const auto& v = tr.column("v_dc");
    const auto& tau = tr.column("tau_m");
    const auto& w1 = tr.column("w1");
    const auto& pg = tr.column("P_g");
    const auto& qg = tr.column("Q_g");
    const auto& se = tr.column("sync_energy");
    const MetricWindows w = metric_windows(tr, script);
    const double i_nom = p.i_nom();
    const double pn = p.p_nom();

    m.vdc_min_pu = std::numeric_limits<double>::infinity();
    m.vdc_max_pu = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < t.size(); ++k) {
        for (const auto& col : tr.columns)
            if (!std::isfinite(col[k])) m.finite = false;
        if (t[k] < tr.event_origin) continue;
        m.i_max_pu = std::max(m.i_max_pu, i[k] / i_nom);
        m.m_max = std::max(m.m_max, mm[k]);
        m.vdc_min_pu = std::min(m.vdc_min_pu, v[k] / p.vdc_ref);
        m.vdc_max_pu = std::max(m.vdc_max_pu, v[k] / p.vdc_ref);
        m.tau_m_max_abs_pu = std::max(m.tau_m_max_abs_pu, std::abs(tau[k]) / p.tau_nom);
    }

    const double pre_a = std::max(tr.event_origin, w.event - 0.2);
    const double post_a = std::max(w.event, w.end - 0.5);
    const double v_before = window_mean(t, v, pre_a, w.event);
    const double v_after = window_mean(t, v, post_a, w.end + 1.0);
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= w.event)
            m.vdc_overshoot_pct = std::max(m.vdc_overshoot_pct, 100.0 * std::abs(v[k] - v_before) / p.vdc_ref);
    const double band = std::max(0.02 * std::abs(v_after - v_before), 1e-9 * p.vdc_ref);
    m.vdc_settling_s = settling_time(t, v, w.event, band, 0.5);

    std::vector<double> pm(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) pm[k] = tau[k] * w1[k];
    m.p_before_pu = window_mean(t, pg, pre_a, w.event) / pn;
    m.p_after_pu = window_mean(t, pg, post_a, w.end + 1.0) / pn;
    m.q_before_pu = window_mean(t, qg, pre_a, w.event) / pn;
    m.q_after_pu = window_mean(t, qg, post_a, w.end + 1.0) / pn;
    m.pm_before_pu = window_mean(t, pm, pre_a, w.event) / pn;
    m.pm_after_pu = window_mean(t, pm, post_a, w.end + 1.0) / pn;

    // Second harmonic of v_dc over the fault (whole post-event span when there is none).
    const double h_end = w.fault_end > w.event ? w.fault_end : w.end;
    std::vector<double> seg;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= w.event && t[k] < h_end) seg.push_back(v[k]);
    const double mean = seg.empty() ? 0.0 : std::accumulate(seg.begin(), seg.end(), 0.0) / static_cast<double>(seg.size());
    for (double& s : seg) s -= mean;
    const double f0 = p.omega0 / (2.0 * std::numbers::pi);
    m.vdc_h2_rms = tone_rms(seg, tr.sample_interval, 2.0 * f0, f0);

    std::size_t k_peak = t.size();
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= w.event && (k_peak == t.size() || se[k] > m.sync_peak)) {
            m.sync_peak = se[k];
            k_peak = k;
        }
    if (k_peak < t.size() && m.sync_peak > 0.0) {
        for (std::size_t k = k_peak; k < t.size(); ++k)
            if (se[k] < 1e-4 * m.sync_peak) {
                m.sync_lock_s = t[k] - w.event;
                break;
            }
    }
    return m;
}

struct LimitCheck {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double bound = 0.0;
};

/// Per-run envelope: current within 2% of i_nom, modulation inside its disc, v_dc in
/// [0.7, 1.3] p.u., every recorded sample finite.
inline std::vector<LimitCheck> limit_checks(const TraceMetrics& m) {
    return {
        {"current", m.i_max_pu <= 1.02, m.i_max_pu, 1.02},
        {"modulation", m.m_max <= kMaxModulation + 1e-12, m.m_max, kMaxModulation + 1e-12},
        {"vdc_low", m.vdc_min_pu >= 0.7, m.vdc_min_pu, 0.7},
        {"vdc_high", m.vdc_max_pu <= 1.3, m.vdc_max_pu, 1.3},
        {"finite", m.finite, m.finite ? 1.0 : 0.0, 1.0},
    };
}

}  // namespace driveline
