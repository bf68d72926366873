#pragma once

// Excited-state population after a resonant pulse, for Fock and thermal
// motional states.
//
// Rabi convention: the model population is sin^2(theta) with
//   quarter:  theta = (1/4) |Omega| J0(kappa) t   (default)
//   half:     theta = (1/2) |Omega| J0(kappa) t
// The quarter form is the one the fitted Rabi frequencies in this project are
// quoted against; switching convention rescales every fitted Omega by 2.

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "swgate/errors.hpp"
#include "swgate/specfun.hpp"

namespace swgate {

enum class RabiConvention { quarter, half };

RabiConvention parse_rabi_convention(std::string_view text);
std::string_view to_string(RabiConvention c);

inline constexpr double kDefaultTruncationEps = 1e-9;
inline constexpr double kMaxTruncatedTail = 1e-6;

struct ThermalState {
  double nbar = 0.0;
  int n_max = 0;

  // Geometric tail mass beyond n_max: (nbar/(nbar+1))^(n_max+1).
  double tail_mass() const;
  // Throws TruncationError when more than 1e-6 of the mass is cut off.
  void validate() const;

  static ThermalState with_tolerance(double nbar, double eps = kDefaultTruncationEps);
};

struct PulseSpec {
  double duration = 0.0;  // s
};

/// Smallest n_max whose geometric tail (nbar/(nbar+1))^(n_max+1) is strictly
/// below eps. Requires 0 < eps < 1.
int choose_truncation(double nbar, double eps);

/// Probability of n for a thermal state of mean nbar.
double thermal_weight(double nbar, int n);

double rabi_argument_factor(RabiConvention c);

/// sin^2(f |omega| J0(kappa) t), f = 1/4 (quarter) or 1/2 (half).
double flop_probability(double omega_mag, double kappa, double t,
                        RabiConvention convention = RabiConvention::quarter);

/// sum_n w0 ratio^n sin^2(x_n). Overwrites x. Compiled with vectorised sin.
double geometric_sin2_sum(std::span<double> x, double w0, double ratio);

/// Thermal sum sum_n p(n) sin^2(f |Omega(n)| J0(kappa) t) for n = 0..n_max without
/// clamping; `coupling(n)` returns |Omega(gamma, n)| in rad/s. This is the form
/// used inside fit objectives.

template <class Coupling>
double thermal_population_unclamped(const ThermalState& state, Coupling&& coupling,
                                    double kappa, double t,
                                    RabiConvention convention = RabiConvention::quarter) {
  state.validate();
  if (!(t >= 0.0)) throw DomainError("thermal_population: duration must be >= 0");
  const double scale = rabi_argument_factor(convention) * bessel_j0(kappa) * t;
  thread_local std::vector<double> args;
  args.resize(static_cast<std::size_t>(state.n_max) + 1);
  for (int n = 0; n <= state.n_max; ++n) args[static_cast<std::size_t>(n)] = scale * coupling(n);
  return geometric_sin2_sum(args, 1.0 / (state.nbar + 1.0), state.nbar / (state.nbar + 1.0));
}

/// thermal_population_unclamped clamped to [0, 1].
template <class Coupling>
double thermal_population(const ThermalState& state, Coupling&& coupling, double kappa,
                          double t, RabiConvention convention = RabiConvention::quarter) {
  const double p = thermal_population_unclamped(state, coupling, kappa, t, convention);
  return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
}

}  // namespace swgate
