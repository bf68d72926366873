#pragma once

#include <numbers>

// CODATA 2018 exact / recommended values, SI units.
namespace swgate::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double hbar = 1.054571817e-34;             // J s
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double elementary_charge = 1.602176634e-19;   // C

inline constexpr double deg_to_rad(double deg) { return deg * pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / pi; }

}  // namespace swgate::constants
