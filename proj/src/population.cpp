#include "swgate/population.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace swgate {

RabiConvention parse_rabi_convention(std::string_view text) {
  if (text == "quarter") return RabiConvention::quarter;
  if (text == "half") return RabiConvention::half;
  throw DomainError("unknown rabi convention '" + std::string(text) +
                    "' (expected quarter or half)");
}

std::string_view to_string(RabiConvention c) {
  return c == RabiConvention::quarter ? "quarter" : "half";
}

double ThermalState::tail_mass() const {
  if (nbar <= 0.0) return 0.0;
  return std::pow(nbar / (nbar + 1.0), static_cast<double>(n_max) + 1.0);
}

void ThermalState::validate() const {
  if (!(nbar >= 0.0) || !std::isfinite(nbar)) {
    throw DomainError("ThermalState: nbar must be finite and >= 0");
  }
  if (n_max < 0) throw DomainError("ThermalState: n_max must be >= 0");
  const double tail = tail_mass();
  if (tail > kMaxTruncatedTail) {
    throw TruncationError("thermal sum truncated at n_max=" + std::to_string(n_max) +
                          " leaves tail mass " + std::to_string(tail) + " for nbar=" +
                          std::to_string(nbar));
  }
}

ThermalState ThermalState::with_tolerance(double nbar, double eps) {
  return {nbar, choose_truncation(nbar, eps)};
}

int choose_truncation(double nbar, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("choose_truncation: eps must lie in (0, 1)");
  if (!(nbar >= 0.0) || !std::isfinite(nbar)) {
    throw DomainError("choose_truncation: nbar must be finite and >= 0");
  }
  if (nbar == 0.0) return 0;
  const double log_ratio = -std::log1p(1.0 / nbar);  // ln(nbar/(nbar+1)) < 0
  // Closed form, then nudge against rounding so the strict inequality holds
  // and n_max is the smallest such value.
  const double estimate = std::ceil(std::log(eps) / log_ratio) - 1.0;
  if (estimate > static_cast<double>(std::numeric_limits<int>::max() - 2)) {
    throw DomainError("choose_truncation: truncation bound overflows");
  }
  int n_max = estimate < 0.0 ? 0 : static_cast<int>(estimate);
  auto tail = [&](int n) { return std::exp((n + 1.0) * log_ratio); };
  while (tail(n_max) >= eps) ++n_max;
  while (n_max > 0 && tail(n_max - 1) < eps) --n_max;
  return n_max;
}

double thermal_weight(double nbar, int n) {
  if (n < 0) return 0.0;
  if (nbar == 0.0) return n == 0 ? 1.0 : 0.0;
  return std::exp(n * std::log(nbar / (nbar + 1.0))) / (nbar + 1.0);
}

double rabi_argument_factor(RabiConvention c) {
  return c == RabiConvention::quarter ? 0.25 : 0.5;
}

double flop_probability(double omega_mag, double kappa, double t, RabiConvention convention) {
  if (!(t >= 0.0)) throw DomainError("flop_probability: duration must be >= 0");
  const double s = std::sin(rabi_argument_factor(convention) * omega_mag * bessel_j0(kappa) * t);
  return s * s;
}

}  // namespace swgate
