#pragma once

// Default parameter sets for a 7 MVA drive with a 5 kV DC bus and a 6 MW shaft.
// Shaft inertias and stiffnesses put the lowest torsional mode at 5.5 Hz and the
// coupled-shaft capacitance near 1000 times the physical DC-link capacitance.

#include <cmath>
#include <numbers>

#include "driveline/frames.hpp"
#include "driveline/plant.hpp"
#include "driveline/scenario.hpp"

namespace driveline {

/// Grid impedances between the PCC and the infinite bus, as R and L (reactance at omega0).
struct GridImpedances {
    double stiff_r = 1.6e-3;
    double stiff_l = 5.3e-4;
    double weak_r = 8e-2;
    double weak_l = 2.58e-3;

    ComplexImpedance for_grid(GridKind g, double omega0) const {
        return g == GridKind::Stiff ? impedance_from_rl(stiff_r, stiff_l, omega0)
                                    : impedance_from_rl(weak_r, weak_l, omega0);
    }
    friend bool operator==(const GridImpedances&, const GridImpedances&) = default;
};

/// Rated grid-side active power. Chosen so that -0.5 p.u. is 2.93 MW and 0.95 p.u. about 5.57 MW.
inline constexpr double kRatedPower = 5.86e6;
/// 600 rpm.
inline constexpr double kRatedShaftSpeed = 20.0 * std::numbers::pi;

/// Two-mass shaft: motor-side rotor (mass 1) and a lighter runner (mass 2).
inline PlantParams default_plant_params() {
    PlantParams p;
    p.masses = {27500.0, 4200.0};
    p.couplings = {{4.3512e6, 2500.0}};
    p.w_nom = kRatedShaftSpeed;
    p.tau_nom = kRatedPower / kRatedShaftSpeed;
    p.z_grid = GridImpedances{}.for_grid(GridKind::Stiff, p.omega0);
    return p;
}

/// Five-mass shaft with the same total inertia and lowest torsional mode.
inline PlantParams five_mass_plant_params() {
    PlantParams p = default_plant_params();
    p.masses = {22000.0, 2400.0, 2600.0, 2300.0, 2400.0};
    p.couplings = {{9.74e6, 1500.0}, {4.4e7, 1000.0}, {4.4e7, 1000.0}, {4.4e7, 1000.0}};
    return p;
}

}  // namespace driveline
