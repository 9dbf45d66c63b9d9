#pragma once

#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "cyclecount/errors.hpp"

namespace cyclecount::dist {

// P(X > x) for X ~ χ²(df).
inline double chi_square_upper(double x, double df) {
  if (!(df > 0)) throw DomainError("chi-square df must be positive");
  if (x <= 0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

inline double normal_two_sided_p(double z) { return std::min(1.0, 2.0 * normal_upper(std::abs(z))); }

inline double normal_quantile(double p) {
  if (!(p > 0 && p < 1)) throw DomainError("normal quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

}  // namespace cyclecount::dist
