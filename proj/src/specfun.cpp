#include "swgate/specfun.hpp"

#include <cmath>

#include "swgate/constants.hpp"
#include "swgate/errors.hpp"

namespace swgate {
namespace {

constexpr double kSeriesLimit = 8.0;
constexpr double kAsymptoticLimit = 25.0;

// Ascending series sum_k (-x^2/4)^k / (k!)^2. Largest term at x = 8 is ~114,
// so cancellation costs about two digits.
double j0_series(double x) {
  const double q = -0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum) + 1e-300) break;
  }
  return sum;
}

// Miller backward recurrence J_{k-1} = (2k/x) J_k - J_{k+1}, normalised by
// J_0 + 2 sum J_{2k} = 1.
double j0_miller(double x) {
  int start = static_cast<int>(x) + 60;
  if (start % 2 != 0) ++start;
  const double two_over_x = 2.0 / x;
  double next = 0.0;     // J_{k+1}
  double current = 1e-300;  // J_k, arbitrary seed
  double even_sum = 0.0;
  for (int k = start; k > 0; --k) {
    const double prev = k * two_over_x * current - next;
    next = current;
    current = prev;
    // current now holds J_{k-1}
    if ((k - 1) % 2 == 0 && k - 1 > 0) even_sum += current;
    if (std::abs(current) > 1e250) {
      current *= 1e-250;
      next *= 1e-250;
      even_sum *= 1e-250;
    }
  }
  return current / (current + 2.0 * even_sum);
}

// Hankel asymptotic expansion with the P/Q series summed to their smallest
// term; at x >= 25 that term is below e^-50.
double j0_asymptotic(double x) {
  const double inv8x = 1.0 / (8.0 * x);
  double p = 1.0;
  double q = 0.0;
  double term = 1.0;
  double last = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= odd * odd * inv8x / k;
    if (term > last) break;
    last = term;
    // Odd k feeds Q (starting at -1/(8x)), even k feeds P.
    switch (k % 4) {
      case 1: q -= term; break;
      case 2: p -= term; break;
      case 3: q += term; break;
      default: p += term; break;
    }
    if (term < 1e-18) break;
  }
  // cos(x - pi/4) = (cos x + sin x)/sqrt2, sin(x - pi/4) = (sin x - cos x)/sqrt2
  const double c = std::cos(x);
  const double s = std::sin(x);
  const double amp = std::sqrt(1.0 / (constants::pi * x));
  return amp * (p * (c + s) - q * (s - c));
}

}  // namespace

double bessel_j0(double x) {
  if (!std::isfinite(x)) throw DomainError("bessel_j0: argument must be finite");
  const double ax = std::abs(x);
  if (ax < kSeriesLimit) return j0_series(ax);
  if (ax < kAsymptoticLimit) return j0_miller(ax);
  return j0_asymptotic(ax);
}

}  // namespace swgate
