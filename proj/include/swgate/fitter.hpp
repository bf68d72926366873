#pragma once

// Simultaneous weighted least-squares fit of the twelve-parameter model to any
// number of scan datasets.
//
// Optimisation runs in internal coordinates: omega1 and nbar in log space,
// alpha through a logistic map onto (0, pi/2), omega2 linear and projected onto
// omega2 >= 0, polynomial coefficients rescaled so that a unit step moves the
// optical phase (or kappa^2) by about one at the largest field in the data.
// a0 is wrapped into one fringe period after every stage; populations are
// invariant under a0 -> a0 + lambda/(2 cos alpha).
//
// Fringe-rich E_y scans have one local minimum per fringe of phase error, so
// each start is fitted on a growing E_y window (power scans are always kept),
// releasing higher polynomial orders as the window widens.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swgate/experiment.hpp"

namespace swgate {

struct Observation {
  double abscissa = 0.0;
  double population = 0.0;
  double weight = 1.0;
};

struct Dataset {
  ScanSpec spec;
  std::vector<Observation> observations;

  // ModelError unless observations are nonempty, populations in [0, 1] and
  // weights > 0.
  void validate() const;
};

enum class Weighting {
  equal,      // 1 per point
  automatic,  // 1/stderr^2 when the scan carries stderr, else 1
};

Weighting parse_weighting(std::string_view text);
std::string_view to_string(Weighting w);

/// Rebuilds the scan spec from the CSV metadata (scan.* keys) and attaches
/// weights. Equal weights are unbiased; automatic weights use the observed
/// stderr, floored at the binomial error of the add-one estimate
/// (k+1)/(shots+2) so all-dark or all-bright points keep a finite weight.
Dataset dataset_from_scan(const ScanResult& scan, Weighting weighting = Weighting::equal);
Dataset dataset_from_scan(const ScanResult& scan, const ScanSpec& spec,
                          Weighting weighting = Weighting::equal);

inline constexpr std::size_t kParameterCount = 12;
// Upper bound on nbar during fitting; the thermal sum grows linearly with it.
inline constexpr double kMaxFittedNbar = 1e3;
using ParameterVector = std::array<double, kParameterCount>;

// Order: a0..a4, m2..m4, omega1, omega2, alpha, nbar.
ParameterVector to_vector(const FitParameterSet& p);
FitParameterSet from_vector(const ParameterVector& v);
const std::array<std::string_view, kParameterCount>& parameter_names();

struct ObjectiveValue {
  double value = 0.0;
  std::size_t penalized_points = 0;  // points whose model could not be evaluated
};

// Residual assigned to a point whose model evaluation failed.
inline constexpr double kPenaltyResidual = 10.0;

/// Sum over all points of weight * (model - observed)^2 with the noiseless,
/// unclamped model. Points where the model cannot be evaluated contribute
/// weight * kPenaltyResidual^2 and are counted.
ObjectiveValue objective_detailed(const ExperimentSetup& setup, const FitParameterSet& params,
                                  std::span<const Dataset> datasets);
double objective(const ExperimentSetup& setup, const FitParameterSet& params,
                 std::span<const Dataset> datasets);

/// Natural step scale of each parameter (used by numeric_gradient): a fringe
/// fraction for a_j, kappa^2 units for m_j, the magnitude of the value for
/// rates, alpha and nbar.
ParameterVector parameter_scales(const ExperimentSetup& setup, const FitParameterSet& params,
                                 std::span<const Dataset> datasets);

/// Central-difference gradient of objective() in natural units with
/// h_i = step * parameter_scales()_i.
ParameterVector numeric_gradient(const ExperimentSetup& setup, const FitParameterSet& params,
                                 std::span<const Dataset> datasets, double step = 1e-5);

enum class FitMethod { levenberg_marquardt, nelder_mead, lm_with_fallback };

FitMethod parse_fit_method(std::string_view text);
std::string_view to_string(FitMethod m);

struct FitOptions {
  int max_iterations = 2000;  // per start, all stages together
  int starts = 8;             // start 0 is the initial guess itself
  double jitter = 0.2;        // relative jitter of the other starts
  std::uint64_t seed = 0;
  unsigned threads = 1;
  FitMethod method = FitMethod::lm_with_fallback;
  // Fractions of the largest |E_y| used by successive stages; must end at 1.
  std::vector<double> window_fractions{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0};
  // Rescale weights so every dataset carries the same total weight.
  bool balance_datasets = false;
};

struct DatasetChi2 {
  std::string name;
  double chi2 = 0.0;
  std::size_t points = 0;
};

struct FitReport {
  FitParameterSet best;
  FitParameterSet initial;
  double residual_norm = 0.0;  // weighted sum of squared residuals at `best`
  double reduced_chi2 = 0.0;
  std::size_t points = 0;
  std::vector<DatasetChi2> chi2;
  ParameterVector standard_errors{};  // NaN where unavailable
  bool standard_errors_available = false;
  bool converged = false;
  int iterations = 0;            // iterations of the winning start
  int best_start = 0;
  std::size_t penalized_points = 0;
  std::vector<double> trace;     // objective after each accepted full-data iteration
  std::vector<double> start_objectives;
};

/// Multi-start, windowed Levenberg-Marquardt (optionally Nelder-Mead) fit.
/// Never throws on non-convergence; the report's flag says so.
FitReport fit(const ExperimentSetup& setup, std::span<const Dataset> datasets,
              const FitParameterSet& initial, const FitOptions& options = {});

/// Human-readable summary as '#' lines followed by a key=value block
/// (fit.*, best.*, stderr.*, chi2.*). `extra` lines are emitted as-is first.
std::string format_fit_report(const FitReport& report, const Metadata& extra = {});

/// Reads best.* keys of a report written by format_fit_report.
FitParameterSet parse_fit_report(std::istream& in);

}  // namespace swgate
