// Built with -ffast-math so the sin loop maps onto the vector math library.
// Inputs are finite by construction.

#include <cmath>
#include <span>

#include "swgate/population.hpp"

namespace swgate {

double geometric_sin2_sum(std::span<double> x, double w0, double ratio) {
  double* v = x.data();
  const std::size_t count = x.size();
  for (std::size_t i = 0; i < count; ++i) {
    const double s = std::sin(v[i]);
    v[i] = s * s;
  }
  double weight = w0;
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    sum += weight * v[i];
    weight *= ratio;
  }
  return sum;
}

}  // namespace swgate
