#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "swgate/constants.hpp"
#include "swgate/errors.hpp"
#include "swgate/fitter.hpp"

using namespace swgate;
namespace c = swgate::constants;

namespace {

// Reference suite on coarser grids so unit-level fits stay fast.
std::vector<ScanSpec> coarse_suite(const ReferenceScenario& ref, int ey_points = 101,
                                   int power_points = 36) {
  std::vector<ScanSpec> out = ref.suite();
  for (auto& s : out) {
    s.grid = s.kind == ScanKind::ey_scan ? linspace(-1.8, 1.8, ey_points)
                                         : linspace(-30.0, 5.0, power_points);
  }
  return out;
}

std::vector<Dataset> simulate_datasets(const ExperimentSetup& setup, const FitParameterSet& p,
                                       const std::vector<ScanSpec>& specs, std::uint64_t seed,
                                       Weighting w = Weighting::automatic) {
  std::vector<Dataset> out;
  for (const auto& s : specs) out.push_back(dataset_from_scan(simulate_scan(setup, p, s, {seed, 1}), w));
  return out;
}

FitParameterSet perturbed(const FitParameterSet& p, double rel, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-rel, rel);
  ParameterVector v = to_vector(p);
  for (auto& x : v) x *= 1.0 + u(rng);
  return from_vector(v);
}

}  // namespace

TEST_CASE("parameter vector order and names") {
  const FitParameterSet p = reference_scenario().params;
  const ParameterVector v = to_vector(p);
  CHECK(v[0] == p.map.a[0]);
  CHECK(v[5] == p.map.m[0]);
  CHECK(v[8] == p.omega1);
  CHECK(v[9] == p.omega2);
  CHECK(v[10] == p.alpha);
  CHECK(v[11] == p.nbar);
  CHECK(to_vector(from_vector(v)) == v);
  CHECK(parameter_names()[11] == "nbar");
}

TEST_CASE("objective: zero at the generator, empty list, penalties") {
  const ReferenceScenario ref = reference_scenario();
  const auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref), 0);
  CHECK(objective(ref.setup, ref.params, data) < 1e-18);
  CHECK(objective(ref.setup, ref.params, std::span<const Dataset>{}) == 0.0);

  FitParameterSet bad = ref.params;
  bad.map.m = {-1.0, 0.0, 0.0};
  const ObjectiveValue v = objective_detailed(ref.setup, bad, data);
  CHECK(v.penalized_points > 0);
  CHECK(std::isfinite(v.value));
  CHECK(v.value >= v.penalized_points * kPenaltyResidual * kPenaltyResidual * 0.99);
}

TEST_CASE("objective rises when omega1 is raised below the first power-scan maximum") {
  const ReferenceScenario ref = reference_scenario();
  ScanSpec spec = ref.carrier_power_antinode;
  spec.grid = linspace(-30.0, -15.0, 31);
  const ScanResult r = simulate_scan(ref.setup, ref.params, spec);
  // Every point sits on the rising edge.
  for (std::size_t i = 1; i < r.population.size(); ++i) REQUIRE(r.population[i] > r.population[i - 1]);
  const std::vector<Dataset> data{dataset_from_scan(r)};
  FitParameterSet up = ref.params;
  up.omega1 *= 1.01;
  CHECK(objective(ref.setup, up, data) > objective(ref.setup, ref.params, data));
}

TEST_CASE("weights scale the objective linearly") {
  const ReferenceScenario ref = reference_scenario(300);
  auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref, 41, 15), 4);
  const FitParameterSet p = perturbed(ref.params, 0.01, 2);
  const double base = objective(ref.setup, p, data);
  for (auto& d : data) {
    for (auto& o : d.observations) o.weight *= 7.5;
  }
  CHECK(objective(ref.setup, p, data) == doctest::Approx(7.5 * base).epsilon(1e-13));
}

TEST_CASE("populations are invariant under a one-fringe shift of a0") {
  const ReferenceScenario ref = reference_scenario(300);
  const auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref), 5);
  const FitParameterSet p = perturbed(ref.params, 0.02, 9);
  const double base = objective(ref.setup, p, data);
  for (double periods : {1.0, 2.0, -1.0}) {
    FitParameterSet q = p;
    q.map.a[0] += periods * ref.setup.wavelength / std::cos(p.alpha);
    CHECK(objective(ref.setup, q, data) == doctest::Approx(base).epsilon(1e-12));
  }
  // Half a spatial period shifts gamma by pi; magnitudes are pi-periodic.
  FitParameterSet half = p;
  half.map.a[0] += ref.setup.wavelength / (2.0 * std::cos(p.alpha));
  CHECK(objective(ref.setup, half, data) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("model population equals a direct re-evaluation from the defining formulas") {
  const ReferenceScenario ref = reference_scenario();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    FitParameterSet p = perturbed(ref.params, 0.3, 100 + i);
    p.alpha = c::deg_to_rad(80.0 * (2.0 * u(rng) - 1.0));
    const ScanSpec& spec = ref.suite()[i % 4];
    const double x = spec.grid[static_cast<std::size_t>(u(rng) * (spec.grid.size() - 1))];
    const auto [ey, db] = spec.operating_point(x);
    const double amp = std::pow(10.0, db / 20.0);
    const auto eta = oracle::lamb_dicke(ref.setup.wavelength, p.alpha, ref.setup.theta,
                                        ref.setup.mass, ref.setup.nu);
    const double gamma = (c::two_pi / ref.setup.wavelength) * std::cos(p.alpha) * p.map.displacement(ey);
    const double o1 = p.omega1 * amp;
    const double o2 = p.omega2 * amp;
    auto coupling = [&](int n) {
      if (spec.transition == Transition::carrier) return oracle::carrier_magnitude(o1, o2, eta, gamma, n);
      return oracle::sideband_magnitude(o1, o2, eta, gamma, n);
    };
    const double expected = oracle::thermal_sum(p.nbar, oracle::oversized_n_max(p.nbar), coupling,
                                                oracle::j0_series(std::sqrt(p.map.kappa_squared(ey))),
                                                spec.pulse.duration, 0.25);
    CHECK(model_population(ref.setup, p, spec, x) == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("numeric gradient agrees with a Richardson oracle") {
  const ReferenceScenario ref = reference_scenario(300);
  const auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref, 61, 21), 6);
  auto f = [&](const FitParameterSet& p) { return objective(ref.setup, p, data); };
  for (int i = 0; i < 4; ++i) {
    FitParameterSet p = perturbed(ref.params, 0.05, 200 + i);
    p.nbar = std::floor(p.nbar) + 0.5;  // away from the integer truncation steps
    const ParameterVector g = numeric_gradient(ref.setup, p, data);
    ParameterVector h = parameter_scales(ref.setup, p, data);
    for (auto& x : h) x *= 1e-3;
    const ParameterVector o = oracle::richardson_gradient(f, p, h);
    for (std::size_t k = 0; k < kParameterCount; ++k) {
      CHECK(g[k] == doctest::Approx(o[k]).epsilon(1e-5));
    }
  }
  CHECK_THROWS_AS(numeric_gradient(ref.setup, ref.params, data, 0.0), DomainError);
}

TEST_CASE("numeric gradient vanishes at a noiseless optimum and along a flat direction") {
  const ReferenceScenario ref = reference_scenario();
  const auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref, 61, 21), 0);
  const ParameterVector g0 = numeric_gradient(ref.setup, ref.params, data);
  const ParameterVector scale = parameter_scales(ref.setup, ref.params, data);
  for (std::size_t k = 0; k < kParameterCount; ++k) {
    CHECK(std::abs(g0[k] * scale[k]) < 1e-6);
  }

  FitParameterSet running = ref.params;
  running.omega2 = 0.0;
  running.alpha = 0.0;
  ScanSpec car = ref.carrier_ey;
  car.grid = linspace(-1.8, 1.8, 61);
  const std::vector<Dataset> one{dataset_from_scan(simulate_scan(ref.setup, ref.params, car))};
  const ParameterVector grad = numeric_gradient(ref.setup, running, one);
  CHECK(std::abs(grad[0]) < 1e-9);
}

TEST_CASE("noiseless data fitted from the truth converges immediately") {
  const ReferenceScenario ref = reference_scenario();
  const auto data = simulate_datasets(ref.setup, ref.params, ref.suite(), 0);
  FitOptions opt;
  opt.starts = 1;
  const FitReport r = fit(ref.setup, data, ref.params, opt);
  CHECK(r.converged);
  CHECK(r.iterations <= 2);
  CHECK(r.residual_norm < 1e-20);
  CHECK(r.best.nbar == doctest::Approx(18.0).epsilon(1e-8));
}

TEST_CASE("fit from a perturbed start: progress, bookkeeping and recovery") {
  const ReferenceScenario ref = reference_scenario(500);
  const auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref), 11);
  const FitParameterSet start = perturbed(ref.params, 0.1, 12);
  FitOptions opt;
  opt.starts = 3;
  opt.seed = 5;
  const FitReport r = fit(ref.setup, data, start, opt);
  CHECK(r.converged);
  CHECK(r.residual_norm <= objective(ref.setup, start, data));
  CHECK(r.residual_norm >= 0.0);
  for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1]);
  if (!r.trace.empty()) CHECK(r.trace.back() == doctest::Approx(r.residual_norm).epsilon(1e-9));
  CHECK(r.points == 2 * 101 + 2 * 36);
  REQUIRE(r.chi2.size() == 4);
  double sum = 0.0;
  for (const auto& d : r.chi2) sum += d.chi2;
  CHECK(sum == doctest::Approx(r.residual_norm).epsilon(1e-10));
  CHECK(r.start_objectives.size() == 3);
  CHECK(r.standard_errors_available);
  CHECK(r.reduced_chi2 == doctest::Approx(r.residual_norm / (r.points - 12.0)));
  // a0 lands inside one fringe period, alpha is reported non-negative.
  CHECK(r.best.alpha >= 0.0);
  CHECK(std::abs(r.best.map.a[0]) <= ref.setup.wavelength / (2.0 * std::cos(r.best.alpha)));
  CHECK(r.best.omega2 / r.best.omega1 == doctest::Approx(0.52).epsilon(0.05));
  CHECK(r.best.nbar == doctest::Approx(18.0).epsilon(0.15));
  CHECK(r.reduced_chi2 < 2.0);
}

TEST_CASE("scaling every weight leaves the fitted optimum unchanged") {
  const ReferenceScenario ref = reference_scenario(500);
  auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref, 61, 21), 21);
  const FitParameterSet start = perturbed(ref.params, 0.02, 22);
  FitOptions opt;
  opt.starts = 1;
  const FitReport a = fit(ref.setup, data, start, opt);
  for (auto& d : data) {
    for (auto& o : d.observations) o.weight *= 3.0;
  }
  const FitReport b = fit(ref.setup, data, start, opt);
  CHECK(b.residual_norm == doctest::Approx(3.0 * a.residual_norm).epsilon(1e-6));
  const ParameterVector va = to_vector(a.best);
  const ParameterVector vb = to_vector(b.best);
  for (std::size_t k = 0; k < kParameterCount; ++k) {
    const double tol = 1e-3 * std::max(std::abs(va[k]), a.standard_errors[k]);
    CHECK(std::abs(va[k] - vb[k]) <= tol);
  }
}

TEST_CASE("running-wave data drives the fitted omega2 to zero within its standard error") {
  ReferenceScenario ref = reference_scenario(500);
  FitParameterSet truth = ref.params;
  truth.omega2 = 0.0;
  std::vector<ScanSpec> specs = coarse_suite(ref);
  const auto data = simulate_datasets(ref.setup, truth, specs, 31);
  FitParameterSet start = truth;
  start.omega2 = 0.2 * truth.omega1;
  FitOptions opt;
  opt.starts = 1;
  const FitReport r = fit(ref.setup, data, start, opt);
  REQUIRE(std::isfinite(r.standard_errors[9]));
  MESSAGE("omega2 = " << r.best.omega2 << " +/- " << r.standard_errors[9]);
  CHECK(r.best.omega2 <= r.standard_errors[9]);
  // The fringe phase is invisible, so a_j carry no error estimate.
  CHECK(std::isnan(r.standard_errors[0]));
}

TEST_CASE("an iteration cap yields a non-converged report rather than an exception") {
  const ReferenceScenario ref = reference_scenario(500);
  const auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref, 41, 15), 41);
  FitOptions opt;
  opt.starts = 1;
  opt.max_iterations = 1;
  const FitReport r = fit(ref.setup, data, perturbed(ref.params, 0.1, 42), opt);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations <= 5);
}

TEST_CASE("fit input validation") {
  const ReferenceScenario ref = reference_scenario();
  CHECK_THROWS_AS(fit(ref.setup, std::span<const Dataset>{}, ref.params), ModelError);
  auto data = simulate_datasets(ref.setup, ref.params, coarse_suite(ref, 11, 5), 0);
  FitOptions opt;
  opt.window_fractions = {0.5};
  CHECK_THROWS_AS(fit(ref.setup, data, ref.params, opt), DomainError);
  data[0].observations[0].population = 1.5;
  CHECK_THROWS_AS(fit(ref.setup, data, ref.params), ModelError);
  data[0].observations[0].population = 0.5;
  data[0].observations[0].weight = 0.0;
  CHECK_THROWS_AS(data[0].validate(), ModelError);
  CHECK(parse_fit_method("lm_nm") == FitMethod::lm_with_fallback);
  CHECK(to_string(FitMethod::nelder_mead) == "nelder_mead");
  CHECK_THROWS_AS(parse_fit_method("bfgs"), DomainError);
  CHECK(parse_weighting("equal") == Weighting::equal);
}

TEST_CASE("Nelder-Mead alone also reduces the objective") {
  const ReferenceScenario ref = reference_scenario(500);
  auto specs = coarse_suite(ref, 41, 15);
  const auto data = simulate_datasets(ref.setup, ref.params, specs, 51);
  const FitParameterSet start = perturbed(ref.params, 0.01, 52);
  FitOptions opt;
  opt.starts = 1;
  opt.method = FitMethod::nelder_mead;
  opt.max_iterations = 400;
  const FitReport r = fit(ref.setup, data, start, opt);
  CHECK(r.residual_norm < objective(ref.setup, start, data));
}

TEST_CASE("dataset weights: inverse variance with a floor, or equal") {
  ScanResult s;
  s.abscissa = {0.0, 0.1, 0.2};
  s.population = {0.5, 0.0, 1.0};
  s.population_stderr = {std::sqrt(0.25 / 100.0), 0.0, 0.0};
  ScanSpec spec;
  spec.name = "w";
  spec.grid = s.abscissa;
  spec.shots = 100;
  spec.pulse = {1e-6};
  const Dataset d = dataset_from_scan(s, spec, Weighting::automatic);
  CHECK(d.observations[0].weight == doctest::Approx(400.0));
  const double floor_p = 1.0 / 102.0;
  CHECK(d.observations[1].weight == doctest::Approx(100.0 / (floor_p * (1.0 - floor_p))));
  CHECK(d.observations[2].weight == doctest::Approx(d.observations[1].weight));
  const Dataset e = dataset_from_scan(s, spec);
  for (const auto& o : e.observations) CHECK(o.weight == 1.0);
}

TEST_CASE("dataset spec is rebuilt from scan metadata") {
  const ReferenceScenario ref = reference_scenario(100);
  const ScanResult r = simulate_scan(ref.setup, ref.params, ref.carrier_power_node, {1, 1});
  const Dataset d = dataset_from_scan(r);
  CHECK(d.spec.name == "carrier_power_node");
  CHECK(d.spec.kind == ScanKind::power_scan);
  CHECK(d.spec.fixed_ey_kvm == -0.08);
  CHECK(d.spec.pulse.duration == 13e-6);
  CHECK(d.spec.shots == 100);
  ScanResult bare = r;
  bare.metadata.clear();
  CHECK_THROWS_AS(dataset_from_scan(bare), IoError);
}

TEST_CASE("fit report text round-trips the best parameters") {
  const ReferenceScenario ref = reference_scenario();
  FitReport r;
  r.best = perturbed(ref.params, 0.1, 3);
  r.standard_errors.fill(0.5);
  r.converged = true;
  const std::string text = format_fit_report(r, {{"config.run.seed", "1"}});
  CHECK(text.rfind("# config.run.seed=1\n", 0) == 0);
  CHECK(text.find("fit.converged=1") != std::string::npos);
  std::istringstream in(text);
  const FitParameterSet back = parse_fit_report(in);
  CHECK(to_vector(back) == to_vector(r.best));
  std::istringstream broken("best.a0_m=1\n");
  CHECK_THROWS_AS(parse_fit_report(broken), IoError);
}
