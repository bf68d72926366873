#pragma once

// Forward model of the two scan types: E_y displacement scans (ion moved
// through the standing-wave fringes) and relative-power scans at a fixed
// E_y, with optional binomial shot noise.
//
// Field units are kV/m throughout the displacement map, drive powers are in dB
// of beam power (Rabi frequencies scale as 10^(dB/20)).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "swgate/coupling.hpp"
#include "swgate/population.hpp"

namespace swgate {

enum class ScanKind { ey_scan, power_scan };
enum class Transition { carrier, red_sideband, blue_sideband };

ScanKind parse_scan_kind(std::string_view text);
Transition parse_transition(std::string_view text);
std::string_view to_string(ScanKind kind);
std::string_view to_string(Transition transition);

/// Polynomial maps from applied field E_y (kV/m) to ion height and to the
/// micromotion modulation index:
///   y(E)       = sum_{j=0..4} a_j E^j        (m)
///   kappa^2(E) = sum_{j=2..4} m_j E^j        (dimensionless)
/// kappa here is the modulation index a beam parallel to the micromotion
/// would see (beta = 0); the setup's beta scales it by cos(beta).
struct DisplacementMap {
  std::array<double, 5> a{};
  std::array<double, 3> m{};  // m2, m3, m4

  double displacement(double ey_kvm) const;
  double kappa_squared(double ey_kvm) const;
  // ModelError if kappa^2 < 0 anywhere on `samples` uniform points of [lo, hi]
  // or any coefficient is non-finite.
  void validate(double ey_lo, double ey_hi, int samples = 1001) const;
};

/// The twelve fitted quantities: a0..a4, m2..m4, Omega1, Omega2, alpha, nbar.
struct FitParameterSet {
  DisplacementMap map;
  double omega1 = 0.0;  // rad/s at 0 dB
  double omega2 = 0.0;  // rad/s at 0 dB
  double alpha = 0.0;   // rad
  double nbar = 0.0;

  // DomainError unless omega1 > 0, omega2 >= 0, nbar >= 0, |alpha| < pi/2.
  void validate() const;
  StandingWaveDrive drive(double power_db = 0.0) const;
};

struct NuSample {
  double ey_kvm = 0.0;
  double nu = 0.0;  // rad/s
};

/// Everything about the apparatus that is held fixed during a fit.
struct ExperimentSetup {
  double wavelength = 729e-9;
  double theta = 0.0;
  double phi = 0.0;
  double mass = 0.0;  // kg
  double nu = 0.0;    // secular frequency on the RF null, rad/s
  MicromotionConfig micromotion;
  // With compensation a small E_x proportional to E_y keeps beta = 0 at every
  // point; without it micromotion.beta is used as a constant.
  bool beta_compensation = true;
  double ex_over_ey = 0.0;  // proportionality constant, metadata only
  RabiConvention rabi = RabiConvention::quarter;
  double truncation_eps = kDefaultTruncationEps;
  // Optional secular frequency vs. E_y, linearly interpolated and clamped at
  // the ends. eta scales as nu^-1/2; the drive is assumed to track resonance.
  std::vector<NuSample> nu_table;

  BeamGeometry geometry(double alpha) const;
  MotionalMode mode_at(double ey_kvm) const;
  double effective_beta() const;
  void validate() const;
};

struct ScanSpec {
  std::string name = "scan";
  ScanKind kind = ScanKind::ey_scan;
  Transition transition = Transition::carrier;
  std::vector<double> grid;  // E_y in kV/m, or relative power in dB
  PulseSpec pulse;
  double power_offset_db = 0.0;  // per-transition drive offset
  double fixed_ey_kvm = 0.0;     // ion position for power scans
  int shots = 0;                 // 0 = noiseless

  // ModelError unless the grid is nonempty and strictly monotone, shots >= 0
  // and the pulse duration is >= 0.
  void validate() const;
  // (E_y, relative power dB) at a grid abscissa.
  std::pair<double, double> operating_point(double abscissa) const;
};

/// n evenly spaced points from lo to hi inclusive (n >= 2), or {lo} for n = 1.
std::vector<double> linspace(double lo, double hi, int n);

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct ScanResult {
  std::vector<double> abscissa;
  std::vector<double> population;
  std::vector<double> population_stderr;  // empty when noiseless
  Metadata metadata;

  bool noiseless() const { return population_stderr.empty(); }
};

struct SimulationOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Noiseless model population at one abscissa, not clamped. Throws ModelError
/// for kappa^2 < 0 at that field.
double model_population(const ExperimentSetup& setup, const FitParameterSet& params,
                        const ScanSpec& spec, double abscissa);

/// Evaluates every grid point. With spec.shots > 0 each point is drawn from a
/// binomial distribution whose generator is derived from (seed, scan name,
/// point index), so the result does not depend on the thread count.
ScanResult simulate_scan(const ExperimentSetup& setup, const FitParameterSet& params,
                         const ScanSpec& spec, const SimulationOptions& options = {});

/// Equivalent drive-power suppression, 20 log10(max_gamma |Omega| / min_gamma |Omega|).
/// For the carrier the Debye-Waller factor is evaluated at n = round(n_or_nbar);
/// for sidebands the sqrt(n) factor cancels. Returns +infinity when the
/// minimum over gamma vanishes.
double suppression_db(const StandingWaveDrive& drive, Transition transition,
                      const BeamGeometry& geom, const MotionalMode& mode, double n_or_nbar);
double suppression_db(const ExperimentSetup& setup, const FitParameterSet& params,
                      Transition transition);

/// Speedup of sideband operations allowed by a given carrier suppression.
double speedup_factor(double suppression_db);

/// Returns the E_x/E_y ratio used for beta compensation; recorded in metadata
/// only, the simulator sets beta = 0 when compensation is on.
double beta_compensation_note(double ex_over_ey);

/// Indices of interior local maxima (strictly above the left neighbour, at
/// least the right one).
std::vector<std::size_t> local_maxima(std::span<const double> values);

/// True when the two sorted position lists alternate strictly (a, b, a, b, ...
/// or b, a, b, ...).
bool positions_interleave(std::span<const double> a, std::span<const double> b);

/// 40Ca+ on a 729 nm quadrupole transition in a surface trap: the published
/// fit values (|alpha| = 18 deg, Omega2/Omega1 = 0.52, nbar = 18) with
/// theta = 13 deg, nu = 2 pi 4.75 MHz, 13 us pulses, and a displacement map whose
/// node/antinode sit at E_y = -0.08 / -0.01 kV/m.
struct ReferenceScenario {
  ExperimentSetup setup;
  FitParameterSet params;
  ScanSpec carrier_ey;
  ScanSpec sideband_ey;
  ScanSpec carrier_power_node;
  ScanSpec carrier_power_antinode;

  std::vector<ScanSpec> suite() const;
};

ReferenceScenario reference_scenario(int shots = 0);

}  // namespace swgate
