#pragma once

// Planar (alpha-beta / dq) vector algebra shared by the plant and every controller.
//
// Conventions:
//   * power-invariant Clarke transform (orthonormal matrix, T^-1 = T^T)
//   * J = R(pi/2), so J [x, y] = [-y, x]
//   * dq = rotate(-theta, alpha-beta)
//   * P = v . i, Q = v . (J i), both invariant under a common rotation

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace driveline {

/// Upper bound on the alpha-beta modulation magnitude with third-harmonic injection.
inline constexpr double kMaxModulation = 0.70710678118654752440;

struct PlanarVec {
    double x = 0.0;
    double y = 0.0;

    constexpr PlanarVec& operator+=(const PlanarVec& o) { x += o.x; y += o.y; return *this; }
    constexpr PlanarVec& operator-=(const PlanarVec& o) { x -= o.x; y -= o.y; return *this; }
    constexpr PlanarVec& operator*=(double s) { x *= s; y *= s; return *this; }

    friend constexpr PlanarVec operator+(PlanarVec a, const PlanarVec& b) { return a += b; }
    friend constexpr PlanarVec operator-(PlanarVec a, const PlanarVec& b) { return a -= b; }
    friend constexpr PlanarVec operator-(const PlanarVec& a) { return {-a.x, -a.y}; }
    friend constexpr PlanarVec operator*(double s, PlanarVec a) { return a *= s; }
    friend constexpr PlanarVec operator*(PlanarVec a, double s) { return a *= s; }
    friend constexpr PlanarVec operator/(PlanarVec a, double s) { return {a.x / s, a.y / s}; }
    friend constexpr bool operator==(const PlanarVec&, const PlanarVec&) = default;
};

constexpr double dot(const PlanarVec& a, const PlanarVec& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const PlanarVec& v) { return std::hypot(v.x, v.y); }
constexpr double norm_sq(const PlanarVec& v) { return dot(v, v); }
inline double angle_of(const PlanarVec& v) { return std::atan2(v.y, v.x); }
inline bool is_finite(const PlanarVec& v) { return std::isfinite(v.x) && std::isfinite(v.y); }

/// J v, i.e. v rotated by +90 degrees.
constexpr PlanarVec perp(const PlanarVec& v) { return {-v.y, v.x}; }

/// Unit vector g1 = [1, 0].
inline constexpr PlanarVec kUnitX{1.0, 0.0};

/// A planar rotation R(angle). Caches the sine/cosine pair.
class Rotation {
public:
    explicit Rotation(double angle) : angle_(angle), c_(std::cos(angle)), s_(std::sin(angle)) {}

    double angle() const { return angle_; }
    PlanarVec apply(const PlanarVec& v) const { return {c_ * v.x - s_ * v.y, s_ * v.x + c_ * v.y}; }
    PlanarVec apply_transpose(const PlanarVec& v) const { return {c_ * v.x + s_ * v.y, -s_ * v.x + c_ * v.y}; }
    Rotation inverse() const { return Rotation(-angle_); }

    friend Rotation operator*(const Rotation& a, const Rotation& b) { return Rotation(a.angle_ + b.angle_); }

private:
    double angle_;
    double c_;
    double s_;
};

inline PlanarVec rotate(double theta, const PlanarVec& v) { return Rotation(theta).apply(v); }

/// r I + x J acting on planar vectors; x is the reactance at the nominal frequency.
struct ComplexImpedance {
    double r = 0.0;
    double x = 0.0;

    constexpr PlanarVec apply(const PlanarVec& i) const { return {r * i.x - x * i.y, x * i.x + r * i.y}; }
    constexpr double magnitude_sq() const { return r * r + x * x; }
    constexpr bool invertible() const { return magnitude_sq() > 0.0; }
    /// Z^-1 v; caller checks invertible().
    constexpr PlanarVec solve(const PlanarVec& v) const {
        const double d = magnitude_sq();
        return {(r * v.x + x * v.y) / d, (-x * v.x + r * v.y) / d};
    }

    friend constexpr ComplexImpedance operator+(const ComplexImpedance& a, const ComplexImpedance& b) {
        return {a.r + b.r, a.x + b.x};
    }
    friend constexpr bool operator==(const ComplexImpedance&, const ComplexImpedance&) = default;
};

/// Impedance R + J omega L.
constexpr ComplexImpedance impedance_from_rl(double resistance, double inductance, double omega) {
    return {resistance, omega * inductance};
}

struct ClarkeResult {
    PlanarVec ab;
    double gamma = 0.0;
};

/// Power-invariant Clarke transform of a three-phase quantity.
inline ClarkeResult clarke(const std::array<double, 3>& abc) {
    constexpr double k = 0.81649658092772603273;   // sqrt(2/3)
    constexpr double h = 0.86602540378443864676;   // sqrt(3)/2
    constexpr double z = 0.57735026918962576451;   // 1/sqrt(3)
    const auto [a, b, c] = abc;
    return {{k * (a - 0.5 * b - 0.5 * c), k * h * (b - c)}, z * (a + b + c)};
}

/// Inverse of clarke(); used by tests and the grid source.
inline std::array<double, 3> inverse_clarke(const PlanarVec& ab, double gamma = 0.0) {
    constexpr double k = 0.81649658092772603273;
    constexpr double h = 0.86602540378443864676;
    constexpr double z = 0.57735026918962576451;
    return {k * ab.x + z * gamma,
            k * (-0.5 * ab.x + h * ab.y) + z * gamma,
            k * (-0.5 * ab.x - h * ab.y) + z * gamma};
}

struct PowerPair {
    double p = 0.0;
    double q = 0.0;
};

inline PowerPair instantaneous_power(const PlanarVec& v, const PlanarVec& i) {
    return {dot(v, i), dot(v, perp(i))};
}

/// Circular limiter: v unchanged inside the disc of radius r, radially scaled onto it outside.
inline PlanarVec circular_sat(const PlanarVec& v, double r) {
    const double n = norm(v);
    if (n <= r) return v;
    return v * (r / n);
}

struct Saturated {
    double value = 0.0;
    bool saturated = false;
};

inline Saturated scalar_sat(double u, double lim) {
    if (u > lim) return {lim, true};
    if (u < -lim) return {-lim, true};
    return {u, false};
}

/// Wraps an unwrapped angle into (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::remainder(a, two_pi);
    if (w <= -std::numbers::pi) w += two_pi;
    return w;
}

}  // namespace driveline
