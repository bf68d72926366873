#include "swgate/coupling.hpp"

#include <cmath>
#include <string>

#include "swgate/constants.hpp"
#include "swgate/errors.hpp"
#include "swgate/specfun.hpp"

namespace swgate {

namespace {

constexpr double kHalfPi = constants::pi / 2.0;

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

// omega1 e^{-i gamma} a + omega2 e^{i gamma} b
Complex interfere(double omega1, double a, double omega2, double b, double gamma) {
  const double c = std::cos(gamma);
  const double s = std::sin(gamma);
  const double x = omega1 * a;
  const double y = omega2 * b;
  return {(x + y) * c, (y - x) * s};
}

}  // namespace

double BeamGeometry::wavenumber() const { return constants::two_pi / wavelength; }

void BeamGeometry::validate() const {
  require(std::isfinite(wavelength) && wavelength > 0.0, "BeamGeometry: wavelength must be > 0");
  require(std::isfinite(alpha) && std::abs(alpha) < kHalfPi, "BeamGeometry: |alpha| must be < pi/2");
  require(std::isfinite(theta) && std::abs(theta) < kHalfPi, "BeamGeometry: |theta| must be < pi/2");
}

void StandingWaveDrive::validate() const {
  require(omega1 >= 0.0 && std::isfinite(omega1), "StandingWaveDrive: omega1 must be >= 0");
  require(omega2 >= 0.0 && std::isfinite(omega2), "StandingWaveDrive: omega2 must be >= 0");
}

void MotionalMode::validate() const {
  require(nu > 0.0 && std::isfinite(nu), "MotionalMode: nu must be > 0");
  require(mass > 0.0 && std::isfinite(mass), "MotionalMode: mass must be > 0");
}

void MicromotionConfig::validate() const {
  require(nu_rf > 0.0 && std::isfinite(nu_rf), "MicromotionConfig: nu_rf must be > 0");
  require(charge > 0.0 && std::isfinite(charge), "MicromotionConfig: charge must be > 0");
  require(std::isfinite(beta), "MicromotionConfig: beta must be finite");
}

LambDickePair lamb_dicke_pair(const BeamGeometry& geom, const MotionalMode& mode) {
  const double scale =
      geom.wavenumber() * std::sqrt(constants::hbar / (2.0 * mode.mass * mode.nu));
  const double ss = std::sin(geom.theta) * std::sin(geom.alpha);
  const double cc = std::cos(geom.theta) * std::cos(geom.alpha);
  // j = 1: (-1)^1 = -1;  j = 2: (-1)^2 = +1
  return {scale * (ss + cc), scale * (ss - cc)};
}

double gamma_at(const BeamGeometry& geom, double y) {
  return geom.wavenumber() * y * std::cos(geom.alpha);
}

double fringe_period(const BeamGeometry& geom) {
  return geom.wavelength / (2.0 * std::cos(geom.alpha));
}

Complex omega_carrier(const StandingWaveDrive& drive, const LambDickePair& eta,
                      double gamma, int n) {
  const double m = 1.0 + 2.0 * n;
  const double f1 = 1.0 - 0.5 * eta.eta1 * eta.eta1 * m;
  const double f2 = 1.0 - 0.5 * eta.eta2 * eta.eta2 * m;
  return interfere(drive.omega1, f1, drive.omega2, f2, gamma);
}

Complex omega_carrier(const StandingWaveDrive& drive, const BeamGeometry& geom,
                      const MotionalMode& mode, double gamma, int n) {
  return omega_carrier(drive, lamb_dicke_pair(geom, mode), gamma, n);
}

Complex omega_red_sideband(const StandingWaveDrive& drive, const LambDickePair& eta,
                           double gamma, int n) {
  if (n <= 0) return {0.0, 0.0};
  const Complex sum = interfere(drive.omega1, eta.eta1, drive.omega2, eta.eta2, gamma);
  return Complex(0.0, std::sqrt(static_cast<double>(n))) * sum;
}

Complex omega_red_sideband(const StandingWaveDrive& drive, const BeamGeometry& geom,
                           const MotionalMode& mode, double gamma, int n) {
  return omega_red_sideband(drive, lamb_dicke_pair(geom, mode), gamma, n);
}

Complex omega_blue_sideband(const StandingWaveDrive& drive, const LambDickePair& eta,
                            double gamma, int n) {
  const Complex sum = interfere(drive.omega1, eta.eta1, drive.omega2, eta.eta2, gamma);
  return Complex(0.0, std::sqrt(static_cast<double>(n) + 1.0)) * sum;
}

Complex omega_blue_sideband(const StandingWaveDrive& drive, const BeamGeometry& geom,
                            const MotionalMode& mode, double gamma, int n) {
  return omega_blue_sideband(drive, lamb_dicke_pair(geom, mode), gamma, n);
}

double kappa_from_pseudopotential(const MicromotionConfig& mm, const BeamGeometry& geom,
                                  const MotionalMode& mode, double phi_pp) {
  if (!(phi_pp >= 0.0)) {
    throw DomainError("kappa_from_pseudopotential: pseudopotential must be >= 0, got " +
                      std::to_string(phi_pp));
  }
  return std::cos(mm.beta) * (2.0 / (geom.wavelength * mm.nu_rf)) *
         std::sqrt(mm.charge * phi_pp / mode.mass);
}

double pseudopotential_from_kappa(const MicromotionConfig& mm, const BeamGeometry& geom,
                                  const MotionalMode& mode, double kappa) {
  if (!(kappa >= 0.0)) {
    throw DomainError("pseudopotential_from_kappa: kappa must be >= 0, got " +
                      std::to_string(kappa));
  }
  const double cb = std::cos(mm.beta);
  if (std::abs(cb) < 1e-15) {
    throw SingularError("pseudopotential_from_kappa: cos(beta) = 0, kappa carries no information");
  }
  const double root = kappa * geom.wavelength * mm.nu_rf / (2.0 * cb);
  return mode.mass * root * root / mm.charge;
}

double modulated_magnitude(Complex omega, double kappa) {
  return std::abs(omega) * bessel_j0(kappa);
}

LambDickeDiagnostic lamb_dicke_diagnostic(double eta, double nbar) {
  const double value = eta * eta * (2.0 * nbar + 1.0);
  return {value, value > kLambDickeWarnThreshold};
}

}  // namespace swgate
