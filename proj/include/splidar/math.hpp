#pragma once

#include <cmath>
#include <limits>

namespace splidar {

/// Speed of light in m/s, used for depth <-> time-delay conversion.
inline constexpr double kSpeedOfLight = 2.99792458e8;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Standard normal density N(x; 0, 1).
inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

/// Gaussian density N(x; mu, sigma^2).
inline double gaussian_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return normal_pdf(z) / sigma;
}

/// Standard normal CDF.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

inline bool nearly_equal(double a, double b, double rel, double abs_tol = 0.0) {
  const double diff = std::abs(a - b);
  if (diff <= abs_tol) return true;
  return diff <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace splidar
