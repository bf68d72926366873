#include "swgate/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "swgate/constants.hpp"
#include "swgate/csv.hpp"
#include "swgate/errors.hpp"
#include "swgate/parallel.hpp"

namespace swgate {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double amplitude_scale(double power_db) { return std::pow(10.0, power_db / 20.0); }

double evaluate_polynomial(std::span<const double> coeffs, int first_power, double x) {
  double acc = 0.0;
  for (std::size_t j = coeffs.size(); j-- > 0;) acc = acc * x + coeffs[j];
  for (int p = 0; p < first_power; ++p) acc *= x;
  return acc;
}

}  // namespace

ScanKind parse_scan_kind(std::string_view text) {
  if (text == "ey_scan") return ScanKind::ey_scan;
  if (text == "power_scan") return ScanKind::power_scan;
  throw ModelError("unknown scan kind '" + std::string(text) + "'");
}

Transition parse_transition(std::string_view text) {
  if (text == "carrier") return Transition::carrier;
  if (text == "red_sideband") return Transition::red_sideband;
  if (text == "blue_sideband") return Transition::blue_sideband;
  throw ModelError("unknown transition '" + std::string(text) + "'");
}

std::string_view to_string(ScanKind kind) {
  return kind == ScanKind::ey_scan ? "ey_scan" : "power_scan";
}

std::string_view to_string(Transition transition) {
  switch (transition) {
    case Transition::carrier: return "carrier";
    case Transition::red_sideband: return "red_sideband";
    case Transition::blue_sideband: return "blue_sideband";
  }
  return "unknown";
}

double DisplacementMap::displacement(double ey_kvm) const {
  return evaluate_polynomial(a, 0, ey_kvm);
}

double DisplacementMap::kappa_squared(double ey_kvm) const {
  return evaluate_polynomial(m, 2, ey_kvm);
}

void DisplacementMap::validate(double ey_lo, double ey_hi, int samples) const {
  for (double c : a) {
    if (!std::isfinite(c)) throw ModelError("displacement map: non-finite a coefficient");
  }
  for (double c : m) {
    if (!std::isfinite(c)) throw ModelError("displacement map: non-finite m coefficient");
  }
  const int n = std::max(samples, 2);
  for (int i = 0; i < n; ++i) {
    const double e = ey_lo + (ey_hi - ey_lo) * i / (n - 1);
    if (kappa_squared(e) < 0.0) {
      throw ModelError("displacement map: kappa^2 < 0 at E_y = " + format_double(e) + " kV/m");
    }
  }
}

void FitParameterSet::validate() const {
  if (!(omega1 > 0.0) || !std::isfinite(omega1)) throw DomainError("omega1 must be > 0");
  if (!(omega2 >= 0.0) || !std::isfinite(omega2)) throw DomainError("omega2 must be >= 0");
  if (!(nbar >= 0.0) || !std::isfinite(nbar)) throw DomainError("nbar must be >= 0");
  if (!(std::abs(alpha) < constants::pi / 2.0)) throw DomainError("|alpha| must be < pi/2");
}

StandingWaveDrive FitParameterSet::drive(double power_db) const {
  const double s = amplitude_scale(power_db);
  return {omega1 * s, omega2 * s};
}

BeamGeometry ExperimentSetup::geometry(double alpha) const {
  return {wavelength, alpha, theta, phi};
}

MotionalMode ExperimentSetup::mode_at(double ey_kvm) const {
  if (nu_table.empty()) return {nu, mass};
  if (ey_kvm <= nu_table.front().ey_kvm) return {nu_table.front().nu, mass};
  if (ey_kvm >= nu_table.back().ey_kvm) return {nu_table.back().nu, mass};
  const auto hi = std::upper_bound(nu_table.begin(), nu_table.end(), ey_kvm,
                                   [](double e, const NuSample& s) { return e < s.ey_kvm; });
  const auto lo = hi - 1;
  const double f = (ey_kvm - lo->ey_kvm) / (hi->ey_kvm - lo->ey_kvm);
  return {lo->nu + f * (hi->nu - lo->nu), mass};
}

double ExperimentSetup::effective_beta() const {
  return beta_compensation ? 0.0 : micromotion.beta;
}

void ExperimentSetup::validate() const {
  geometry(0.0).validate();
  MotionalMode{nu, mass}.validate();
  if (!std::isfinite(micromotion.beta)) throw DomainError("beta must be finite");
  if (!(truncation_eps > 0.0 && truncation_eps < 1.0)) {
    throw DomainError("truncation_eps must lie in (0, 1)");
  }
  for (std::size_t i = 0; i < nu_table.size(); ++i) {
    if (!(nu_table[i].nu > 0.0)) throw DomainError("nu table entries must be > 0");
    if (i > 0 && !(nu_table[i].ey_kvm > nu_table[i - 1].ey_kvm)) {
      throw DomainError("nu table must be strictly increasing in E_y");
    }
  }
}

void ScanSpec::validate() const {
  if (grid.empty()) throw ModelError("scan '" + name + "': grid is empty");
  if (grid.size() > 1) {
    const bool up = grid[1] > grid[0];
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (up ? !(grid[i] > grid[i - 1]) : !(grid[i] < grid[i - 1])) {
        throw ModelError("scan '" + name + "': grid must be strictly monotone");
      }
    }
  }
  for (double g : grid) {
    if (!std::isfinite(g)) throw ModelError("scan '" + name + "': non-finite grid value");
  }
  if (shots < 0) throw ModelError("scan '" + name + "': shots must be >= 0");
  if (!(pulse.duration >= 0.0)) throw ModelError("scan '" + name + "': duration must be >= 0");
}

std::pair<double, double> ScanSpec::operating_point(double abscissa) const {
  if (kind == ScanKind::ey_scan) return {abscissa, power_offset_db};
  return {fixed_ey_kvm, abscissa + power_offset_db};
}

double model_population(const ExperimentSetup& setup, const FitParameterSet& params,
                        const ScanSpec& spec, double abscissa) {
  const auto [ey, power_db] = spec.operating_point(abscissa);
  const double kappa_sq = params.map.kappa_squared(ey);
  if (!(kappa_sq >= 0.0)) {
    throw ModelError("kappa^2 = " + format_double(kappa_sq) + " < 0 at E_y = " +
                     format_double(ey) + " kV/m");
  }
  const double kappa = std::cos(setup.effective_beta()) * std::sqrt(kappa_sq);
  const BeamGeometry geom = setup.geometry(params.alpha);
  const LambDickePair eta = lamb_dicke_pair(geom, setup.mode_at(ey));
  const double gamma = gamma_at(geom, params.map.displacement(ey));
  const StandingWaveDrive drive = params.drive(power_db);
  // Truncation is chosen for ceil(nbar) so n_max only moves at integer nbar;
  // the objective stays smooth under small nbar steps.
  const ThermalState state{params.nbar,
                           choose_truncation(std::ceil(params.nbar), setup.truncation_eps)};
  const double t = spec.pulse.duration;

  // |A e^{-i gamma} + B e^{i gamma}|^2 = A^2 + B^2 + 2 A B cos(2 gamma) for real A, B;
  // with B = 0 the result is exactly independent of gamma.
  const double c2g = std::cos(2.0 * gamma);
  const double w1 = drive.omega1;
  const double w2 = drive.omega2;

  switch (spec.transition) {
    case Transition::carrier: {
      // Omega_car(n) = U - (2n+1) V with U = (w1, w2), V = (w1 c1, w2 c2).
      const double c1 = 0.5 * eta.eta1 * eta.eta1;
      const double c2 = 0.5 * eta.eta2 * eta.eta2;
      const double v1 = w1 * c1;
      const double v2 = w2 * c2;
      const double uu = w1 * w1 + w2 * w2 + 2.0 * w1 * w2 * c2g;
      const double uv = w1 * v1 + w2 * v2 + (w1 * v2 + w2 * v1) * c2g;
      const double vv = v1 * v1 + v2 * v2 + 2.0 * v1 * v2 * c2g;
      return thermal_population_unclamped(
          state,
          [&](int n) {
            const double m = 2.0 * n + 1.0;
            return std::sqrt(std::max(0.0, uu - 2.0 * m * uv + m * m * vv));
          },
          kappa, t, setup.rabi);
    }
    case Transition::red_sideband:
    case Transition::blue_sideband: {
      const double s1 = w1 * eta.eta1;
      const double s2 = w2 * eta.eta2;
      const double base = std::sqrt(std::max(0.0, s1 * s1 + s2 * s2 + 2.0 * s1 * s2 * c2g));
      const double shift = spec.transition == Transition::red_sideband ? 0.0 : 1.0;
      return thermal_population_unclamped(
          state, [&](int n) { return base * std::sqrt(n + shift); }, kappa, t, setup.rabi);
    }
  }
  throw ModelError("unknown transition");
}

ScanResult simulate_scan(const ExperimentSetup& setup, const FitParameterSet& params,
                         const ScanSpec& spec, const SimulationOptions& options) {
  setup.validate();
  params.validate();
  spec.validate();

  const std::size_t count = spec.grid.size();
  ScanResult result;
  result.abscissa = spec.grid;
  result.population.assign(count, 0.0);
  if (spec.shots > 0) result.population_stderr.assign(count, 0.0);

  const std::uint64_t stream = splitmix64(options.seed) ^ fnv1a(spec.name);
  parallel_for(count, options.threads, [&](std::size_t i) {
    const double p = std::clamp(model_population(setup, params, spec, spec.grid[i]), 0.0, 1.0);
    if (spec.shots == 0) {
      result.population[i] = p;
      return;
    }
    std::mt19937_64 rng(splitmix64(stream + splitmix64(i)));
    std::binomial_distribution<int> draw(spec.shots, p);
    const double shots = static_cast<double>(spec.shots);
    const double p_hat = draw(rng) / shots;
    result.population[i] = p_hat;
    result.population_stderr[i] = std::sqrt(p_hat * (1.0 - p_hat) / shots);
  });

  const BeamGeometry geom = setup.geometry(params.alpha);
  auto& md = result.metadata;
  md.emplace_back("scan.name", spec.name);
  md.emplace_back("scan.kind", std::string(to_string(spec.kind)));
  md.emplace_back("scan.transition", std::string(to_string(spec.transition)));
  md.emplace_back("scan.duration_s", format_double(spec.pulse.duration));
  md.emplace_back("scan.power_offset_db", format_double(spec.power_offset_db));
  md.emplace_back("scan.fixed_ey_kvm", format_double(spec.fixed_ey_kvm));
  md.emplace_back("scan.shots", std::to_string(spec.shots));
  md.emplace_back("rng.seed", std::to_string(options.seed));
  md.emplace_back("rng.engine", "mt19937_64/binomial, splitmix64 per point");
  for (int j = 0; j < 5; ++j) {
    md.emplace_back("params.a" + std::to_string(j) + "_m", format_double(params.map.a[j]));
  }
  for (int j = 0; j < 3; ++j) {
    md.emplace_back("params.m" + std::to_string(j + 2), format_double(params.map.m[j]));
  }
  md.emplace_back("params.omega1_rad_s", format_double(params.omega1));
  md.emplace_back("params.omega2_rad_s", format_double(params.omega2));
  md.emplace_back("params.alpha_rad", format_double(params.alpha));
  md.emplace_back("params.nbar", format_double(params.nbar));
  md.emplace_back("setup.rabi_convention", std::string(to_string(setup.rabi)));
  md.emplace_back("setup.beta_compensation", setup.beta_compensation ? "true" : "false");
  md.emplace_back("setup.ex_over_ey", format_double(beta_compensation_note(setup.ex_over_ey)));
  md.emplace_back("setup.fringe_period_m", format_double(fringe_period(geom)));
  return result;
}

double suppression_db(const StandingWaveDrive& drive, Transition transition,
                      const BeamGeometry& geom, const MotionalMode& mode, double n_or_nbar) {
  const LambDickePair eta = lamb_dicke_pair(geom, mode);
  // |a e^{-i gamma} + b e^{i gamma}| ranges over [||a|-|b||, |a|+|b|] for real a, b.
  double a = 0.0;
  double b = 0.0;
  if (transition == Transition::carrier) {
    const double m = 1.0 + 2.0 * std::round(std::max(0.0, n_or_nbar));
    a = drive.omega1 * (1.0 - 0.5 * eta.eta1 * eta.eta1 * m);
    b = drive.omega2 * (1.0 - 0.5 * eta.eta2 * eta.eta2 * m);
  } else {
    a = drive.omega1 * eta.eta1;
    b = drive.omega2 * eta.eta2;
  }
  const double hi = std::abs(a) + std::abs(b);
  const double lo = std::abs(std::abs(a) - std::abs(b));
  if (hi == 0.0) return 0.0;
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(hi / lo);
}

double suppression_db(const ExperimentSetup& setup, const FitParameterSet& params,
                      Transition transition) {
  return suppression_db(params.drive(), transition, setup.geometry(params.alpha),
                        setup.mode_at(0.0), params.nbar);
}

double speedup_factor(double suppression) { return std::pow(10.0, suppression / 20.0); }

double beta_compensation_note(double ex_over_ey) { return ex_over_ey; }

std::vector<std::size_t> local_maxima(std::span<const double> values) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < values.size(); ++i) {
    if (values[i] > values[i - 1] && values[i] >= values[i + 1]) out.push_back(i);
  }
  return out;
}

bool positions_interleave(std::span<const double> a, std::span<const double> b) {
  std::vector<std::pair<double, int>> merged;
  merged.reserve(a.size() + b.size());
  for (double x : a) merged.emplace_back(x, 0);
  for (double x : b) merged.emplace_back(x, 1);
  std::sort(merged.begin(), merged.end());
  for (std::size_t i = 1; i < merged.size(); ++i) {
    if (merged[i].second == merged[i - 1].second) return false;
  }
  return true;
}

std::vector<ScanSpec> ReferenceScenario::suite() const {
  return {carrier_ey, sideband_ey, carrier_power_node, carrier_power_antinode};
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw DomainError("linspace: need at least one point");
  if (n == 1) return {lo};
  std::vector<double> v(static_cast<std::size_t>(n));
  // Weighted form: exact endpoints, and symmetric grids hit 0 exactly.
  const double last = n - 1;
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = (lo * (last - i) + hi * i) / last;
  return v;
}

ReferenceScenario reference_scenario(int shots) {
  using constants::deg_to_rad;
  using constants::two_pi;
  ReferenceScenario s;
  ExperimentSetup& setup = s.setup;
  setup.wavelength = 729e-9;
  setup.theta = deg_to_rad(13.0);
  setup.mass = 40.0 * constants::atomic_mass_unit;
  setup.nu = two_pi * 4.75e6;
  setup.micromotion = {two_pi * 40e6, 0.0, constants::elementary_charge};
  setup.beta_compensation = true;

  FitParameterSet& p = s.params;
  p.alpha = deg_to_rad(18.0);
  p.omega1 = two_pi * 190e3;
  p.omega2 = 0.52 * p.omega1;
  p.nbar = 18.0;

  // Node at E_y = -0.08 kV/m and the adjacent antinode at -0.01 kV/m:
  // a quarter fringe (gamma advances by pi/2) over 0.07 kV/m.
  constexpr double node_ey = -0.08;
  constexpr double antinode_ey = -0.01;
  const double k_cos = two_pi / setup.wavelength * std::cos(p.alpha);
  auto& a = p.map.a;
  a[1] = (constants::pi / 2.0) / (k_cos * (antinode_ey - node_ey));
  a[2] = 4e-8;
  a[3] = -3e-8;
  a[4] = 5e-9;
  a[0] = 0.0;
  a[0] = -p.map.displacement(node_ey);
  p.map.m = {2.0, 0.1, 0.05};

  const PulseSpec pulse{13e-6};
  s.carrier_ey = {"carrier_ey", ScanKind::ey_scan, Transition::carrier,
                  linspace(-1.8, 1.8, 201), pulse, -13.5, 0.0, shots};
  s.sideband_ey = {"sideband_ey", ScanKind::ey_scan, Transition::red_sideband,
                   linspace(-1.8, 1.8, 201), pulse, -4.0, 0.0, shots};
  s.carrier_power_node = {"carrier_power_node", ScanKind::power_scan, Transition::carrier,
                          linspace(-30.0, 5.0, 71), pulse, 0.0, node_ey, shots};
  s.carrier_power_antinode = {"carrier_power_antinode", ScanKind::power_scan,
                              Transition::carrier, linspace(-30.0, 5.0, 71), pulse, 0.0,
                              antinode_ey, shots};
  return s;
}

}  // namespace swgate
