#include "swgate/trapmodel.hpp"

#include <cmath>
#include <limits>

#include "swgate/errors.hpp"

namespace swgate {

namespace {

constexpr double kVoltsPerMeterPerKvm = 1e3;

MicromotionConfig at_zero_beta(MicromotionConfig mm) {
  mm.beta = 0.0;
  return mm;
}

}  // namespace

double QuadrupoleTrap::total_curvature() const {
  return secular_freq_rf * secular_freq_rf + dc_freq * dc_freq;
}

void QuadrupoleTrap::validate() const {
  if (!(secular_freq_rf > 0.0)) throw DomainError("trap: secular_freq_rf must be > 0");
  if (!(mass > 0.0)) throw DomainError("trap: mass must be > 0");
  if (!(charge != 0.0) || !std::isfinite(charge)) throw DomainError("trap: charge must be nonzero");
  if (!std::isfinite(null_position) || !std::isfinite(dc_freq)) {
    throw DomainError("trap: non-finite parameter");
  }
  if (!(total_curvature() > 0.0)) throw SingularError("trap: total curvature must be > 0");
}

double pseudopotential_at(const QuadrupoleTrap& trap, double y) {
  const double d = y - trap.null_position;
  return trap.mass / (2.0 * trap.charge) * trap.secular_freq_rf * trap.secular_freq_rf * d * d;
}

double displacement_vs_field(const QuadrupoleTrap& trap, double ey_v_per_m) {
  const double curvature = trap.total_curvature();
  if (!(curvature > 0.0)) throw SingularError("displacement_vs_field: zero total curvature");
  return trap.null_position + trap.charge * ey_v_per_m / (trap.mass * curvature);
}

DisplacementMap map_from_trap(const QuadrupoleTrap& trap, const MicromotionConfig& mm,
                              double wavelength) {
  trap.validate();
  DisplacementMap map;
  const double slope = trap.charge * kVoltsPerMeterPerKvm / (trap.mass * trap.total_curvature());
  map.a[0] = trap.null_position;
  map.a[1] = slope;
  // kappa^2 = (2 / (lambda nu_rf))^2 (q/m) Phi_pp with Phi_pp = (m/2q) omega_pp^2 (slope E)^2.
  const double k = 2.0 / (wavelength * mm.nu_rf);
  map.m[0] = k * k * 0.5 * trap.secular_freq_rf * trap.secular_freq_rf * slope * slope;
  return map;
}

double relative_deviation(double model, double fit) {
  const double abs_dev = std::abs(fit - model);
  if (model == 0.0) return abs_dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return abs_dev / std::abs(model);
}

std::vector<ComparisonRow> compare_to_fit(const QuadrupoleTrap& trap, const DisplacementMap& fitted,
                                          const MicromotionConfig& mm, double wavelength,
                                          std::span<const double> grid_kvm) {
  std::vector<ComparisonRow> rows;
  if (grid_kvm.empty()) return rows;
  trap.validate();
  const MicromotionConfig mm0 = at_zero_beta(mm);
  BeamGeometry geom;
  geom.wavelength = wavelength;
  const MotionalMode mode{std::sqrt(trap.total_curvature()), trap.mass};
  const double y_model_0 = displacement_vs_field(trap, 0.0);
  const double y_fit_0 = fitted.displacement(0.0);

  rows.reserve(grid_kvm.size());
  for (double e : grid_kvm) {
    ComparisonRow r;
    r.ey_kvm = e;
    const double y_abs = displacement_vs_field(trap, e * kVoltsPerMeterPerKvm);
    r.y_model = y_abs - y_model_0;
    r.y_fit = fitted.displacement(e) - y_fit_0;
    r.y_abs_dev = std::abs(r.y_fit - r.y_model);
    r.y_rel_dev = relative_deviation(r.y_model, r.y_fit);
    r.phi_model = pseudopotential_at(trap, y_abs);
    const double k2 = fitted.kappa_squared(e);
    r.phi_fit = k2 >= 0.0 ? pseudopotential_from_kappa(mm0, geom, mode, std::sqrt(k2))
                          : std::numeric_limits<double>::quiet_NaN();
    r.phi_abs_dev = std::abs(r.phi_fit - r.phi_model);
    r.phi_rel_dev = relative_deviation(r.phi_model, r.phi_fit);
    rows.push_back(r);
  }
  return rows;
}

CsvTable comparison_table(std::span<const ComparisonRow> rows, const Metadata& metadata) {
  CsvTable t;
  t.metadata = metadata;
  t.header = {"ey_kvm",   "y_model_m",   "y_fit_m",     "y_abs_dev_m", "y_rel_dev",
              "phi_model_v", "phi_fit_v", "phi_abs_dev_v", "phi_rel_dev"};
  for (const auto& r : rows) {
    t.rows.push_back({format_double(r.ey_kvm), format_double(r.y_model), format_double(r.y_fit),
                      format_double(r.y_abs_dev), format_double(r.y_rel_dev),
                      format_double(r.phi_model), format_double(r.phi_fit),
                      format_double(r.phi_abs_dev), format_double(r.phi_rel_dev)});
  }
  return t;
}

}  // namespace swgate
