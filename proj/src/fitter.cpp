#include "swgate/fitter.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <random>
#include <sstream>

#include "swgate/constants.hpp"
#include "swgate/csv.hpp"
#include "swgate/errors.hpp"
#include "swgate/parallel.hpp"

namespace swgate {

namespace {

constexpr std::size_t kA0 = 0;
constexpr std::size_t kM2 = 5;
constexpr std::size_t kOmega1 = 8;
constexpr std::size_t kOmega2 = 9;
constexpr std::size_t kAlpha = 10;
constexpr std::size_t kNbar = 11;

constexpr double kHalfPi = constants::pi / 2.0;
constexpr double kJacobianStep = 1e-5;  // internal units
constexpr double kRelativeDecreaseTol = 1e-10;
// Intermediate continuation stages only need to land in the right basin.
constexpr double kStageDecreaseTol = 1e-6;
constexpr double kGradientTol = 1e-8;
// Largest LM step per coordinate, internal units.
constexpr double kMaxStep = 2.0;
// Multi-start pruning between continuation stages.
constexpr double kPruneFactor = 2.0;
constexpr double kDuplicateDistance = 1e-3;  // internal units
// Jacobian columns below this fraction of the largest are treated as zero.
constexpr double kInvisibleColumn = 1e-8;

const std::string& require_key(const Metadata& md, std::string_view key) {
  const std::string* v = find_metadata(md, key);
  if (!v) throw IoError("scan metadata is missing '" + std::string(key) + "'");
  return *v;
}

// Field at which a point probes the displacement map.
double point_field(const ScanSpec& spec, double abscissa) {
  return spec.operating_point(abscissa).first;
}

double largest_field(std::span<const Dataset> datasets) {
  double e = 0.0;
  for (const auto& d : datasets) {
    for (const auto& o : d.observations) e = std::max(e, std::abs(point_field(d.spec, o.abscissa)));
  }
  return e > 0.0 ? e : 1.0;
}

// Maps between natural parameters and the unconstrained, O(1)-scaled
// coordinates the optimisers work in.
class Transform {
 public:
  Transform(const ExperimentSetup& setup, double omega_ref, double e_ref)
      : omega_ref_(omega_ref > 0.0 ? omega_ref : 1.0) {
    const double phase_length = setup.wavelength / constants::two_pi;
    for (int j = 0; j < 5; ++j) a_scale_[j] = phase_length / std::pow(e_ref, j);
    for (int j = 0; j < 3; ++j) m_scale_[j] = 1.0 / std::pow(e_ref, j + 2);
  }

  ParameterVector to_internal(const FitParameterSet& p) const {
    ParameterVector u{};
    for (int j = 0; j < 5; ++j) u[kA0 + j] = p.map.a[j] / a_scale_[j];
    for (int j = 0; j < 3; ++j) u[kM2 + j] = p.map.m[j] / m_scale_[j];
    u[kOmega1] = std::log(p.omega1 / omega_ref_);
    u[kOmega2] = std::max(0.0, p.omega2) / omega_ref_;
    const double f = std::clamp(std::abs(p.alpha) / kHalfPi, 1e-9, 1.0 - 1e-9);
    u[kAlpha] = std::log(f / (1.0 - f));
    u[kNbar] = std::log(std::max(p.nbar, 1e-6));
    return u;
  }

  FitParameterSet to_natural(const ParameterVector& u) const {
    FitParameterSet p;
    for (int j = 0; j < 5; ++j) p.map.a[j] = u[kA0 + j] * a_scale_[j];
    for (int j = 0; j < 3; ++j) p.map.m[j] = u[kM2 + j] * m_scale_[j];
    p.omega1 = omega_ref_ * std::exp(u[kOmega1]);
    p.omega2 = omega_ref_ * u[kOmega2];
    p.alpha = kHalfPi / (1.0 + std::exp(-u[kAlpha]));
    p.nbar = std::exp(u[kNbar]);
    return p;
  }

  // dp_i/du_i at u.
  ParameterVector derivative(const ParameterVector& u) const {
    ParameterVector d{};
    for (int j = 0; j < 5; ++j) d[kA0 + j] = a_scale_[j];
    for (int j = 0; j < 3; ++j) d[kM2 + j] = m_scale_[j];
    d[kOmega1] = omega_ref_ * std::exp(u[kOmega1]);
    d[kOmega2] = omega_ref_;
    const double s = 1.0 / (1.0 + std::exp(-u[kAlpha]));
    d[kAlpha] = kHalfPi * s * (1.0 - s);
    d[kNbar] = std::exp(u[kNbar]);
    return d;
  }

  double internal_a0(double a0) const { return a0 / a_scale_[0]; }

  // Projects onto the feasible set: omega2 >= 0, nbar <= kMaxFittedNbar.
  static void project(ParameterVector& u) {
    u[kOmega2] = std::max(0.0, u[kOmega2]);
    u[kNbar] = std::min(u[kNbar], std::log(kMaxFittedNbar));
  }

 private:
  double omega_ref_;
  std::array<double, 5> a_scale_{};
  std::array<double, 3> m_scale_{};
};

struct PointRef {
  std::size_t dataset;
  std::size_t observation;
};

// Datasets plus the subset of points and parameters one optimisation stage sees.
struct Problem {
  const ExperimentSetup* setup;
  std::span<const Dataset> datasets;
  std::vector<double> weight_scale;  // per dataset
  std::vector<PointRef> points;
  const Transform* transform;

  std::size_t residual_count() const { return points.size(); }

  // Fills r with sqrt(w) (model - observed); returns penalised point count.
  std::size_t residuals(const ParameterVector& u, Eigen::VectorXd& r) const {
    const FitParameterSet p = transform->to_natural(u);
    r.resize(static_cast<Eigen::Index>(points.size()));
    std::size_t penalized = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Dataset& d = datasets[points[i].dataset];
      const Observation& o = d.observations[points[i].observation];
      const double sw = std::sqrt(o.weight * weight_scale[points[i].dataset]);
      double diff = kPenaltyResidual;
      try {
        const double model = model_population(*setup, p, d.spec, o.abscissa);
        if (std::isfinite(model)) {
          diff = model - o.population;
        } else {
          ++penalized;
        }
      } catch (const Error&) {
        ++penalized;
      }
      r[static_cast<Eigen::Index>(i)] = sw * diff;
    }
    return penalized;
  }

  double cost(const ParameterVector& u) const {
    Eigen::VectorXd r;
    residuals(u, r);
    return r.squaredNorm();
  }
};

std::vector<double> dataset_weight_scales(std::span<const Dataset> datasets, bool balance) {
  std::vector<double> scales(datasets.size(), 1.0);
  if (!balance || datasets.empty()) return scales;
  double total_points = 0.0;
  for (const auto& d : datasets) total_points += static_cast<double>(d.observations.size());
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    scales[i] = total_points /
                (static_cast<double>(datasets.size()) * static_cast<double>(datasets[i].observations.size()));
  }
  return scales;
}

std::vector<PointRef> points_within(std::span<const Dataset> datasets, double window) {
  std::vector<PointRef> out;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const Dataset& ds = datasets[d];
    for (std::size_t i = 0; i < ds.observations.size(); ++i) {
      const bool keep = ds.spec.kind == ScanKind::power_scan ||
                        std::abs(point_field(ds.spec, ds.observations[i].abscissa)) <= window;
      if (keep) out.push_back({d, i});
    }
  }
  return out;
}

using Mask = std::array<bool, kParameterCount>;

// Stage s of n releases polynomial powers up to s + 1. nbar and alpha are held
// until the last two stages: with the fringe phase still wrong, raising nbar
// washes out the contrast and is a spurious descent direction.
Mask stage_mask(std::size_t stage, std::size_t stages) {
  Mask mask{};
  mask.fill(true);
  if (stage + 1 == stages) return mask;
  const std::size_t order = stage + 1;
  for (std::size_t j = 0; j < 5; ++j) mask[kA0 + j] = j <= order;
  for (std::size_t j = 0; j < 3; ++j) mask[kM2 + j] = j + 2 <= order;
  if (stage + 2 < stages) {
    mask[kNbar] = false;
    mask[kAlpha] = false;
  }
  return mask;
}

std::vector<std::size_t> active_indices(const Mask& mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < kParameterCount; ++i) {
    if (mask[i]) idx.push_back(i);
  }
  return idx;
}

Eigen::MatrixXd jacobian(const Problem& problem, const ParameterVector& u,
                         const std::vector<std::size_t>& active, unsigned threads) {
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(problem.residual_count()),
                      static_cast<Eigen::Index>(active.size()));
  parallel_for(active.size(), threads, [&](std::size_t c) {
    ParameterVector plus = u;
    ParameterVector minus = u;
    plus[active[c]] += kJacobianStep;
    minus[active[c]] -= kJacobianStep;
    Eigen::VectorXd rp;
    Eigen::VectorXd rm;
    problem.residuals(plus, rp);
    problem.residuals(minus, rm);
    jac.col(static_cast<Eigen::Index>(c)) = (rp - rm) / (2.0 * kJacobianStep);
  });
  return jac;
}

struct StageResult {
  ParameterVector u{};
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
  std::vector<double> trace;
};

StageResult levenberg_marquardt(const Problem& problem, ParameterVector u, const Mask& mask,
                                int budget, unsigned threads, double tolerance) {
  const auto active = active_indices(mask);
  const auto p = static_cast<Eigen::Index>(active.size());
  StageResult out;
  Eigen::VectorXd r;
  problem.residuals(u, r);
  double cost = r.squaredNorm();
  out.trace.push_back(cost);
  double lambda = 1e-3;

  while (true) {
    if (cost == 0.0) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd jac = jacobian(problem, u, active, threads);
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() < kGradientTol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= budget) break;
    ++out.iterations;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const double diag_floor = std::max(jtj.diagonal().maxCoeff(), 1.0) * 1e-12;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = jtj;
      for (Eigen::Index i = 0; i < p; ++i) {
        damped(i, i) += lambda * std::max(jtj(i, i), diag_floor);
      }
      Eigen::VectorXd step = damped.ldlt().solve(-grad);
      const double longest = step.lpNorm<Eigen::Infinity>();
      if (longest > kMaxStep) step *= kMaxStep / longest;
      ParameterVector trial = u;
      for (Eigen::Index i = 0; i < p; ++i) trial[active[static_cast<std::size_t>(i)]] += step[i];
      Transform::project(trial);
      Eigen::VectorXd r_trial;
      double trial_cost = std::numeric_limits<double>::infinity();
      if (step.allFinite()) {
        problem.residuals(trial, r_trial);
        trial_cost = r_trial.squaredNorm();
      }
      if (trial_cost < cost) {
        const double decrease = (cost - trial_cost) / cost;
        u = trial;
        r = std::move(r_trial);
        cost = trial_cost;
        out.trace.push_back(cost);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (decrease < tolerance) out.converged = true;
      } else {
        lambda *= 4.0;
        if (lambda > 1e14) break;
      }
    }
    if (out.converged) break;
    if (!accepted) {
      out.stalled = true;
      break;
    }
  }
  out.u = u;
  out.cost = cost;
  return out;
}

StageResult nelder_mead(const Problem& problem, ParameterVector u, const Mask& mask, int budget,
                        double tolerance) {
  const auto active = active_indices(mask);
  const std::size_t n = active.size();
  StageResult out;
  auto point_cost = [&](ParameterVector& x) {
    Transform::project(x);
    return problem.cost(x);
  };

  std::vector<ParameterVector> simplex(n + 1, u);
  std::vector<double> costs(n + 1);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][active[i]] += 0.1;
  for (std::size_t i = 0; i <= n; ++i) costs[i] = point_cost(simplex[i]);

  // Adaptive coefficients for higher dimensions (Gao & Han).
  const double dim = static_cast<double>(n);
  const double reflect = 1.0;
  const double expand = 1.0 + 2.0 / dim;
  const double contract = 0.75 - 1.0 / (2.0 * dim);
  const double shrink = 1.0 - 1.0 / dim;

  std::vector<std::size_t> order(n + 1);
  while (out.iterations < budget) {
    ++out.iterations;
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];
    out.trace.push_back(costs[best]);
    const double spread = costs[worst] - costs[best];
    if (spread <= tolerance * std::max(std::abs(costs[best]), 1e-300)) {
      out.converged = true;
      break;
    }

    ParameterVector centroid = simplex[best];
    for (std::size_t k : active) {
      double s = 0.0;
      for (std::size_t i = 0; i <= n; ++i) {
        if (i != worst) s += simplex[i][k];
      }
      centroid[k] = s / dim;
    }
    auto along = [&](double t) {
      ParameterVector x = centroid;
      for (std::size_t k : active) x[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
      return x;
    };

    ParameterVector xr = along(-reflect);
    const double fr = point_cost(xr);
    if (fr < costs[best]) {
      ParameterVector xe = along(-reflect * expand);
      const double fe = point_cost(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        costs[worst] = fe;
      } else {
        simplex[worst] = xr;
        costs[worst] = fr;
      }
      continue;
    }
    if (fr < costs[second]) {
      simplex[worst] = xr;
      costs[worst] = fr;
      continue;
    }
    const bool outside = fr < costs[worst];
    ParameterVector xc = along(outside ? -reflect * contract : contract);
    const double fc = point_cost(xc);
    if (fc < (outside ? fr : costs[worst])) {
      simplex[worst] = xc;
      costs[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t k : active) {
        simplex[i][k] = simplex[best][k] + shrink * (simplex[i][k] - simplex[best][k]);
      }
      costs[i] = point_cost(simplex[i]);
    }
  }
  const auto best_it = std::min_element(costs.begin(), costs.end());
  out.u = simplex[static_cast<std::size_t>(best_it - costs.begin())];
  out.cost = *best_it;
  return out;
}

void wrap_phase_offset(ParameterVector& u, const Transform& transform, double wavelength) {
  FitParameterSet p = transform.to_natural(u);
  const double period = wavelength / (2.0 * std::cos(p.alpha));
  const double wrapped = p.map.a[0] - period * std::floor(p.map.a[0] / period);
  u[kA0] = transform.internal_a0(wrapped);
}

struct StartState {
  ParameterVector u{};
  int iterations = 0;
  bool converged = false;
  bool alive = true;
  double stage_cost = 0.0;
  std::vector<double> trace;
};

// Runs one continuation stage for one start.
void advance_start(const Problem& problem, const Mask& mask, const Transform& transform,
                   const FitOptions& options, double wavelength, bool last_stage,
                   unsigned column_threads, StartState& st) {
  const int budget = options.max_iterations - st.iterations;
  const double tolerance = last_stage ? kRelativeDecreaseTol : kStageDecreaseTol;
  StageResult stage;
  if (options.method == FitMethod::nelder_mead) {
    stage = nelder_mead(problem, st.u, mask, budget, tolerance);
  } else {
    stage = levenberg_marquardt(problem, st.u, mask, budget, column_threads, tolerance);
    if (options.method == FitMethod::lm_with_fallback && stage.stalled &&
        stage.iterations < budget) {
      StageResult polish =
          nelder_mead(problem, stage.u, mask, budget - stage.iterations, tolerance);
      polish.iterations += stage.iterations;
      if (polish.cost <= stage.cost) {
        polish.trace.insert(polish.trace.begin(), stage.trace.begin(), stage.trace.end());
        stage = std::move(polish);
      }
    }
  }
  st.u = stage.u;
  wrap_phase_offset(st.u, transform, wavelength);
  st.iterations += stage.iterations;
  st.stage_cost = problem.cost(st.u);
  if (last_stage) {
    st.converged = stage.converged;
    st.trace = std::move(stage.trace);
  } else if (st.iterations >= options.max_iterations) {
    st.converged = false;
  }
}

// Starts far behind the leader, or sitting on the same optimum as a
// lower-indexed start, are not carried into the next stage.
void prune_starts(std::vector<StartState>& states) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& st : states) {
    if (st.alive) best = std::min(best, st.stage_cost);
  }
  for (auto& st : states) {
    if (st.alive && !(st.stage_cost <= kPruneFactor * best)) st.alive = false;
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!states[i].alive) continue;
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      if (!states[j].alive) continue;
      double dist = 0.0;
      for (std::size_t k = 0; k < kParameterCount; ++k) {
        dist = std::max(dist, std::abs(states[i].u[k] - states[j].u[k]));
      }
      if (dist < kDuplicateDistance) states[j].alive = false;
    }
  }
}

ParameterVector jittered(const FitParameterSet& initial, double jitter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  ParameterVector v = to_vector(initial);
  for (double& x : v) x *= 1.0 + jitter * unit(rng);
  v[kAlpha] = std::clamp(std::abs(v[kAlpha]), 1e-6, kHalfPi - 1e-6);
  return v;
}

void fill_standard_errors(const Problem& problem, const Transform& transform,
                          const ParameterVector& u, double cost, FitReport& report) {
  report.standard_errors.fill(std::numeric_limits<double>::quiet_NaN());
  report.standard_errors_available = false;
  Mask all{};
  all.fill(true);
  const auto active = active_indices(all);
  const Eigen::MatrixXd jac = jacobian(problem, u, active, 1);

  // Parameters the data cannot see (column at rounding-noise level, e.g. the
  // a_j of a running wave) are left out and keep a NaN error.
  double largest = 0.0;
  for (Eigen::Index c = 0; c < jac.cols(); ++c) largest = std::max(largest, jac.col(c).norm());
  std::vector<Eigen::Index> kept;
  for (Eigen::Index c = 0; c < jac.cols(); ++c) {
    if (jac.col(c).norm() > kInvisibleColumn * largest) kept.push_back(c);
  }
  const auto n = static_cast<Eigen::Index>(problem.residual_count());
  const auto k = static_cast<Eigen::Index>(kept.size());
  if (k == 0 || n <= k) return;
  Eigen::MatrixXd reduced(n, k);
  Eigen::VectorXd norms(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    norms[c] = jac.col(kept[static_cast<std::size_t>(c)]).norm();
    reduced.col(c) = jac.col(kept[static_cast<std::size_t>(c)]) / norms[c];
  }
  const Eigen::MatrixXd normal = reduced.transpose() * reduced;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > hi * 1e-14)) return;
  const Eigen::MatrixXd cov_scaled =
      eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
      eig.eigenvectors().transpose();
  const double reduced_chi2 = cost / static_cast<double>(n - k);
  const ParameterVector dpdu = transform.derivative(u);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto idx = static_cast<std::size_t>(kept[static_cast<std::size_t>(c)]);
    const double var_internal = cov_scaled(c, c) / (norms[c] * norms[c]) * reduced_chi2;
    report.standard_errors[idx] = std::abs(dpdu[idx]) * std::sqrt(var_internal);
  }
  report.standard_errors_available = true;
}

}  // namespace

void Dataset::validate() const {
  spec.validate();
  if (observations.empty()) throw ModelError("dataset '" + spec.name + "' has no observations");
  for (const auto& o : observations) {
    if (!(o.population >= 0.0 && o.population <= 1.0)) {
      throw ModelError("dataset '" + spec.name + "': population outside [0, 1]");
    }
    if (!(o.weight > 0.0) || !std::isfinite(o.weight)) {
      throw ModelError("dataset '" + spec.name + "': weights must be > 0");
    }
    if (!std::isfinite(o.abscissa)) throw ModelError("dataset '" + spec.name + "': bad abscissa");
  }
}

Weighting parse_weighting(std::string_view text) {
  if (text == "auto" || text == "automatic") return Weighting::automatic;
  if (text == "equal") return Weighting::equal;
  throw DomainError("unknown weighting '" + std::string(text) + "' (expected auto or equal)");
}

std::string_view to_string(Weighting w) { return w == Weighting::equal ? "equal" : "auto"; }

Dataset dataset_from_scan(const ScanResult& scan, Weighting weighting) {
  const Metadata& md = scan.metadata;
  ScanSpec spec;
  spec.name = require_key(md, "scan.name");
  spec.kind = parse_scan_kind(require_key(md, "scan.kind"));
  spec.transition = parse_transition(require_key(md, "scan.transition"));
  spec.pulse.duration = parse_double(require_key(md, "scan.duration_s"), "scan.duration_s");
  spec.power_offset_db = parse_double(require_key(md, "scan.power_offset_db"), "scan.power_offset_db");
  spec.fixed_ey_kvm = parse_double(require_key(md, "scan.fixed_ey_kvm"), "scan.fixed_ey_kvm");
  spec.shots = static_cast<int>(parse_double(require_key(md, "scan.shots"), "scan.shots"));
  spec.grid = scan.abscissa;
  return dataset_from_scan(scan, spec, weighting);
}

Dataset dataset_from_scan(const ScanResult& scan, const ScanSpec& spec, Weighting weighting) {
  Dataset d;
  d.spec = spec;
  d.spec.grid = scan.abscissa;
  const bool use_stderr = weighting == Weighting::automatic && !scan.noiseless();
  const double shots = spec.shots > 0 ? static_cast<double>(spec.shots) : 0.0;
  for (std::size_t i = 0; i < scan.abscissa.size(); ++i) {
    double w = 1.0;
    if (use_stderr) {
      double se = scan.population_stderr[i];
      if (shots > 0.0) {
        const double smoothed = (scan.population[i] * shots + 1.0) / (shots + 2.0);
        se = std::max(se, std::sqrt(smoothed * (1.0 - smoothed) / shots));
      }
      if (se > 0.0) w = 1.0 / (se * se);
    }
    d.observations.push_back({scan.abscissa[i], scan.population[i], w});
  }
  d.validate();
  return d;
}

ParameterVector to_vector(const FitParameterSet& p) {
  return {p.map.a[0], p.map.a[1], p.map.a[2], p.map.a[3], p.map.a[4], p.map.m[0],
          p.map.m[1], p.map.m[2], p.omega1,   p.omega2,   p.alpha,    p.nbar};
}

FitParameterSet from_vector(const ParameterVector& v) {
  FitParameterSet p;
  for (int j = 0; j < 5; ++j) p.map.a[j] = v[kA0 + j];
  for (int j = 0; j < 3; ++j) p.map.m[j] = v[kM2 + j];
  p.omega1 = v[kOmega1];
  p.omega2 = v[kOmega2];
  p.alpha = v[kAlpha];
  p.nbar = v[kNbar];
  return p;
}

const std::array<std::string_view, kParameterCount>& parameter_names() {
  static const std::array<std::string_view, kParameterCount> names{
      "a0_m", "a1_m", "a2_m", "a3_m", "a4_m", "m2", "m3", "m4",
      "omega1_rad_s", "omega2_rad_s", "alpha_rad", "nbar"};
  return names;
}

ObjectiveValue objective_detailed(const ExperimentSetup& setup, const FitParameterSet& params,
                                  std::span<const Dataset> datasets) {
  ObjectiveValue out;
  for (const auto& d : datasets) {
    for (const auto& o : d.observations) {
      double diff = kPenaltyResidual;
      try {
        const double model = model_population(setup, params, d.spec, o.abscissa);
        if (std::isfinite(model)) {
          diff = model - o.population;
        } else {
          ++out.penalized_points;
        }
      } catch (const Error&) {
        ++out.penalized_points;
      }
      out.value += o.weight * diff * diff;
    }
  }
  return out;
}

double objective(const ExperimentSetup& setup, const FitParameterSet& params,
                 std::span<const Dataset> datasets) {
  return objective_detailed(setup, params, datasets).value;
}

ParameterVector parameter_scales(const ExperimentSetup& setup, const FitParameterSet& params,
                                 std::span<const Dataset> datasets) {
  const double e_ref = largest_field(datasets);
  const Transform transform(setup, params.omega1, e_ref);
  // Unit internal steps for the polynomial coefficients; magnitudes otherwise.
  ParameterVector unit{};
  unit.fill(1.0);
  FitParameterSet ones = transform.to_natural(unit);
  ParameterVector s{};
  for (int j = 0; j < 5; ++j) s[kA0 + j] = ones.map.a[j];
  for (int j = 0; j < 3; ++j) s[kM2 + j] = ones.map.m[j];
  s[kOmega1] = std::abs(params.omega1) > 0.0 ? std::abs(params.omega1) : 1.0;
  s[kOmega2] = std::max(std::abs(params.omega2), 1e-3 * s[kOmega1]);
  s[kAlpha] = std::max(std::abs(params.alpha), 1e-3);
  s[kNbar] = std::max(std::abs(params.nbar), 1e-3);
  return s;
}

ParameterVector numeric_gradient(const ExperimentSetup& setup, const FitParameterSet& params,
                                 std::span<const Dataset> datasets, double step) {
  if (!(step > 0.0)) throw DomainError("numeric_gradient: step must be > 0");
  const ParameterVector scales = parameter_scales(setup, params, datasets);
  const ParameterVector base = to_vector(params);
  ParameterVector grad{};
  for (std::size_t i = 0; i < kParameterCount; ++i) {
    const double h = step * scales[i];
    ParameterVector plus = base;
    ParameterVector minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = objective(setup, from_vector(plus), datasets);
    const double fm = objective(setup, from_vector(minus), datasets);
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

FitMethod parse_fit_method(std::string_view text) {
  if (text == "lm") return FitMethod::levenberg_marquardt;
  if (text == "nelder_mead") return FitMethod::nelder_mead;
  if (text == "lm_nm") return FitMethod::lm_with_fallback;
  throw DomainError("unknown fit method '" + std::string(text) +
                    "' (expected lm, nelder_mead or lm_nm)");
}

std::string_view to_string(FitMethod m) {
  switch (m) {
    case FitMethod::levenberg_marquardt: return "lm";
    case FitMethod::nelder_mead: return "nelder_mead";
    case FitMethod::lm_with_fallback: return "lm_nm";
  }
  return "unknown";
}

FitReport fit(const ExperimentSetup& setup, std::span<const Dataset> datasets,
              const FitParameterSet& initial, const FitOptions& options) {
  if (datasets.empty()) throw ModelError("fit needs at least one dataset");
  for (const auto& d : datasets) d.validate();
  setup.validate();
  initial.validate();
  if (options.window_fractions.empty() || options.window_fractions.back() < 1.0) {
    throw DomainError("fit: window_fractions must end at 1");
  }

  FitReport report;
  report.initial = initial;
  const double e_ref = largest_field(datasets);
  const Transform transform(setup, initial.omega1, e_ref);
  const auto weight_scale = dataset_weight_scales(datasets, options.balance_datasets);

  const int starts = std::max(1, options.starts);
  std::vector<ParameterVector> start_points;
  std::mt19937_64 rng(options.seed);
  FitParameterSet first = initial;
  first.alpha = std::clamp(std::abs(first.alpha), 1e-6, kHalfPi - 1e-6);
  start_points.push_back(transform.to_internal(first));
  for (int s = 1; s < starts; ++s) {
    start_points.push_back(transform.to_internal(from_vector(jittered(first, options.jitter, rng))));
  }

  // Parallelise across starts when there are several, otherwise across
  // Jacobian columns. Every evaluation is pure, so results do not depend on it.
  const unsigned start_threads = starts > 1 ? options.threads : 1;
  const unsigned column_threads = starts > 1 ? 1 : options.threads;
  std::vector<StartState> states(start_points.size());
  for (std::size_t i = 0; i < states.size(); ++i) states[i].u = start_points[i];

  const std::size_t stages = options.window_fractions.size();
  // The simplex drifts on partial windows and cannot recover within a normal
  // budget, so Nelder-Mead alone fits the full window directly.
  const std::size_t first_stage = options.method == FitMethod::nelder_mead ? stages - 1 : 0;
  for (std::size_t s = first_stage; s < stages; ++s) {
    const Problem problem{&setup, datasets, weight_scale,
                          points_within(datasets, options.window_fractions[s] * e_ref * (1.0 + 1e-12)),
                          &transform};
    const Mask mask = stage_mask(s, stages);
    const bool last = s + 1 == stages;
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (states[i].alive && (last || states[i].iterations < options.max_iterations)) {
        live.push_back(i);
      }
    }
    parallel_for(live.size(), start_threads, [&](std::size_t k) {
      advance_start(problem, mask, transform, options, setup.wavelength, last, column_threads,
                    states[live[k]]);
    });
    if (!last) prune_starts(states);
  }

  Problem full{&setup, datasets, weight_scale, points_within(datasets, INFINITY), &transform};
  std::vector<double> full_costs(states.size());
  parallel_for(states.size(), start_threads,
               [&](std::size_t i) { full_costs[i] = full.cost(states[i].u); });
  std::size_t best = 0;
  bool have_best = false;
  for (std::size_t i = 0; i < states.size(); ++i) {
    report.start_objectives.push_back(full_costs[i]);
    if (states[i].alive && (!have_best || full_costs[i] < full_costs[best])) {
      best = i;
      have_best = true;
    }
  }
  const StartState& win = states[best];
  report.best_start = static_cast<int>(best);
  report.best = transform.to_natural(win.u);
  report.converged = win.converged;
  report.iterations = win.iterations;
  report.trace = win.trace;

  Eigen::VectorXd r;
  report.penalized_points = full.residuals(win.u, r);
  report.residual_norm = r.squaredNorm();
  report.points = full.residual_count();

  std::size_t offset = 0;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const std::size_t n = datasets[d].observations.size();
    report.chi2.push_back({datasets[d].spec.name,
                           r.segment(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(n))
                               .squaredNorm(),
                           n});
    offset += n;
  }
  fill_standard_errors(full, transform, win.u, report.residual_norm, report);
  const std::size_t dof =
      report.points > kParameterCount ? report.points - kParameterCount : 1;
  report.reduced_chi2 = report.residual_norm / static_cast<double>(dof);
  return report;
}

std::string format_fit_report(const FitReport& report, const Metadata& extra) {
  std::ostringstream out;
  for (const auto& [k, v] : extra) out << "# " << k << '=' << v << '\n';
  const auto& names = parameter_names();
  const ParameterVector best = to_vector(report.best);
  out << "# fit " << (report.converged ? "converged" : "NOT converged") << " after "
      << report.iterations << " iterations (start " << report.best_start << ")\n";
  out << "# weighted SSR " << format_double(report.residual_norm) << " over " << report.points
      << " points, reduced chi2 " << format_double(report.reduced_chi2) << '\n';
  out << "# Omega2/Omega1 = " << format_double(report.best.omega2 / report.best.omega1)
      << ", alpha = " << format_double(constants::rad_to_deg(report.best.alpha))
      << " deg, nbar = " << format_double(report.best.nbar) << '\n';
  for (std::size_t i = 0; i < kParameterCount; ++i) {
    out << "#   " << names[i] << " = " << format_double(best[i]) << " +/- "
        << format_double(report.standard_errors[i]) << '\n';
  }
  out << "fit.converged=" << (report.converged ? 1 : 0) << '\n';
  out << "fit.iterations=" << report.iterations << '\n';
  out << "fit.best_start=" << report.best_start << '\n';
  out << "fit.residual_norm=" << format_double(report.residual_norm) << '\n';
  out << "fit.reduced_chi2=" << format_double(report.reduced_chi2) << '\n';
  out << "fit.points=" << report.points << '\n';
  out << "fit.penalized_points=" << report.penalized_points << '\n';
  out << "fit.standard_errors_available=" << (report.standard_errors_available ? 1 : 0) << '\n';
  for (std::size_t i = 0; i < kParameterCount; ++i) {
    out << "best." << names[i] << '=' << format_double(best[i]) << '\n';
  }
  for (std::size_t i = 0; i < kParameterCount; ++i) {
    out << "stderr." << names[i] << '=' << format_double(report.standard_errors[i]) << '\n';
  }
  for (const auto& c : report.chi2) {
    out << "chi2." << c.name << '=' << format_double(c.chi2) << '\n';
  }
  for (std::size_t i = 0; i < report.start_objectives.size(); ++i) {
    out << "start." << i << ".objective=" << format_double(report.start_objectives[i]) << '\n';
  }
  return out.str();
}

FitParameterSet parse_fit_report(std::istream& in) {
  const auto& names = parameter_names();
  ParameterVector v{};
  std::array<bool, kParameterCount> seen{};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    if (key.rfind("best.", 0) != 0) continue;
    const std::string name = key.substr(5);
    for (std::size_t i = 0; i < kParameterCount; ++i) {
      if (names[i] == name) {
        v[i] = parse_double(line.substr(eq + 1), key);
        seen[i] = true;
      }
    }
  }
  for (std::size_t i = 0; i < kParameterCount; ++i) {
    if (!seen[i]) throw IoError("fit report is missing best." + std::string(names[i]));
  }
  return from_vector(v);
}

}  // namespace swgate
