#pragma once

// Ideal linear-quadrupole trap: harmonic pseudopotential around the RF null
// plus a DC curvature along y. Used to produce reference y(E_y) and
// Phi_pp(E_y) curves for fitted displacement maps.

#include <span>
#include <string>
#include <vector>

#include "swgate/coupling.hpp"
#include "swgate/csv.hpp"
#include "swgate/experiment.hpp"

namespace swgate {

struct QuadrupoleTrap {
  double secular_freq_rf = 0.0;  // RF-only secular frequency at the null, rad/s
  double dc_freq = 0.0;          // DC contribution along y, rad/s
  double null_position = 0.0;    // m
  double stray_field = 0.0;      // V/m; metadata, E_y = 0 is defined as the null
  double mass = 0.0;             // kg
  double charge = 0.0;           // C

  double total_curvature() const;  // omega_pp^2 + omega_dc^2
  // DomainError unless secular_freq_rf > 0, mass > 0, charge != 0;
  // SingularError when the total curvature is not positive.
  void validate() const;
};

/// (m / 2q) omega_pp^2 (y - y_null)^2, in volts.
double pseudopotential_at(const QuadrupoleTrap& trap, double y);

/// y_null + q E_y / (m (omega_pp^2 + omega_dc^2)); E_y in V/m.
double displacement_vs_field(const QuadrupoleTrap& trap, double ey_v_per_m);

/// The displacement map the ideal trap produces (linear y, quadratic kappa^2),
/// with kappa evaluated at beta = 0.
DisplacementMap map_from_trap(const QuadrupoleTrap& trap, const MicromotionConfig& mm,
                              double wavelength);

struct ComparisonRow {
  double ey_kvm = 0.0;
  double y_model = 0.0;  // relative to E_y = 0
  double y_fit = 0.0;    // relative to E_y = 0
  double y_abs_dev = 0.0;
  double y_rel_dev = 0.0;
  double phi_model = 0.0;
  double phi_fit = 0.0;  // NaN where the fitted kappa^2 is negative
  double phi_abs_dev = 0.0;
  double phi_rel_dev = 0.0;
};

/// Relative deviation |fit - model| / |model|; 0 when both vanish, +infinity
/// when only the model does.
double relative_deviation(double model, double fit);

/// Model vs. fitted y and Phi_pp on a shared E_y grid (kV/m). Displacements
/// are compared relative to their E_y = 0 values; the fitted Phi_pp comes from
/// pseudopotential_from_kappa(sqrt(kappa^2)) at beta = 0.
std::vector<ComparisonRow> compare_to_fit(const QuadrupoleTrap& trap, const DisplacementMap& fitted,
                                          const MicromotionConfig& mm, double wavelength,
                                          std::span<const double> grid_kvm);

CsvTable comparison_table(std::span<const ComparisonRow> rows, const Metadata& metadata = {});

}  // namespace swgate
