#pragma once

// Position-dependent coupling strengths of a trapped ion sitting in the
// standing wave formed by an incident beam and its mirror reflection.
//
// Conventions:
//   * all angular frequencies are rad/s, lengths m, angles rad;
//   * everything is evaluated on resonance in the rotating frame, so the
//     returned amplitudes are coupling strengths, not time evolutions;
//   * the optical phase of the standing wave at position y is
//     gamma = k y cos(alpha); nodes sit at gamma = l*pi.

#include <complex>

namespace swgate {

using Complex = std::complex<double>;

struct BeamGeometry {
  double wavelength = 729e-9;  // m
  double alpha = 0.0;          // incidence angle from the mirror normal
  double theta = 0.0;          // motional-mode axis from the surface normal
  double phi = 0.0;            // drive phase; drops out of every magnitude

  double wavenumber() const;
  // Throws DomainError unless wavelength > 0 and |alpha|, |theta| < pi/2.
  void validate() const;
};

struct StandingWaveDrive {
  double omega1 = 0.0;  // incident-beam Rabi frequency
  double omega2 = 0.0;  // reflected-beam Rabi frequency
  void validate() const;
};

struct MotionalMode {
  double nu = 0.0;    // secular frequency
  double mass = 0.0;  // kg
  void validate() const;
};

struct MicromotionConfig {
  double nu_rf = 0.0;   // trap RF drive, rad/s
  double beta = 0.0;    // micromotion direction vs. gate beam
  double charge = 0.0;  // C
  void validate() const;
};

struct LambDickePair {
  double eta1 = 0.0;  // incident beam
  double eta2 = 0.0;  // reflected beam
};

/// eta_j = k sqrt(hbar / 2 m nu) [sin(theta) sin(alpha) - (-1)^j cos(theta) cos(alpha)].
/// The two have opposite sign exactly when cos(theta)cos(alpha) > sin(theta)sin(alpha),
/// which is what puts carrier and sideband fringes half a period apart.
LambDickePair lamb_dicke_pair(const BeamGeometry& geom, const MotionalMode& mode);

/// Standing-wave optical phase k y cos(alpha) at equilibrium height y.
double gamma_at(const BeamGeometry& geom, double y);

/// Distance between adjacent carrier maxima, lambda / (2 cos alpha).
double fringe_period(const BeamGeometry& geom);

// Carrier coupling including the (1 + 2n) Debye-Waller correction of each beam.
Complex omega_carrier(const StandingWaveDrive& drive, const LambDickePair& eta,
                      double gamma, int n);
Complex omega_carrier(const StandingWaveDrive& drive, const BeamGeometry& geom,
                      const MotionalMode& mode, double gamma, int n);

// i sqrt(n) (omega1 e^{-i gamma} eta1 + omega2 e^{i gamma} eta2)
Complex omega_red_sideband(const StandingWaveDrive& drive, const LambDickePair& eta,
                           double gamma, int n);
Complex omega_red_sideband(const StandingWaveDrive& drive, const BeamGeometry& geom,
                           const MotionalMode& mode, double gamma, int n);

// i sqrt(n + 1) (omega1 e^{-i gamma} eta1 + omega2 e^{i gamma} eta2)
Complex omega_blue_sideband(const StandingWaveDrive& drive, const LambDickePair& eta,
                            double gamma, int n);
Complex omega_blue_sideband(const StandingWaveDrive& drive, const BeamGeometry& geom,
                            const MotionalMode& mode, double gamma, int n);

/// Micromotion modulation index for an ion sitting at pseudopotential phi_pp (V):
/// kappa = cos(beta) (2 / (lambda nu_rf)) sqrt(q phi_pp / m).
/// nu_rf is taken in rad/s, the same convention as every other frequency.
double kappa_from_pseudopotential(const MicromotionConfig& mm, const BeamGeometry& geom,
                                  const MotionalMode& mode, double phi_pp);

/// Exact inverse of kappa_from_pseudopotential. Throws SingularError when
/// cos(beta) = 0 and DomainError for negative kappa.
double pseudopotential_from_kappa(const MicromotionConfig& mm, const BeamGeometry& geom,
                                  const MotionalMode& mode, double kappa);

/// |omega| J0(kappa). The sign of J0 is kept; populations only ever see its square.
double modulated_magnitude(Complex omega, double kappa);

struct LambDickeDiagnostic {
  double value = 0.0;  // eta^2 (2 nbar + 1)
  bool warn = false;   // value above threshold
};

inline constexpr double kLambDickeWarnThreshold = 0.25;

LambDickeDiagnostic lamb_dicke_diagnostic(double eta, double nbar);

}  // namespace swgate
