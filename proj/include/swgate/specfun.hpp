#pragma once

namespace swgate {

/// Bessel function of the first kind, order zero.
///
/// Absolute error below 1e-12 on |x| <= 50 (and well beyond); exactly even.
/// Throws DomainError for non-finite x.
double bessel_j0(double x);

}  // namespace swgate
