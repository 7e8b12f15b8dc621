#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include <Eigen/Core>

namespace nash::math {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

inline double logsumexp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double logsumexp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return logsumexp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double log_normal_density_std(double z) { return -0.5 * (kLog2Pi + z * z); }

/// log of the upper tail 1 - Phi(z), accurate far into the tail.
double log_normal_sf(double z);

/// log(Phi(b) - Phi(a)) for a < b (either may be infinite).
double log_normal_interval(double a, double b);

}  // namespace nash::math
