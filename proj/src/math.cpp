#include "nash/math.hpp"

namespace nash::math {

double log_normal_sf(double z) {
  if (z < 8.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  // Mills ratio by backward continued fraction: R(z) = 1/(z + 1/(z + 2/(z + ...))).
  double tail = z;
  for (int k = 60; k >= 1; --k) tail = z + k / tail;
  return log_normal_density_std(z) - std::log(tail);
}

double log_normal_interval(double a, double b) {
  if (!(a < b)) return kNegInf;
  if (a >= 0.0) {
    const double la = log_normal_sf(a);
    const double lb = std::isinf(b) ? kNegInf : log_normal_sf(b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b <= 0.0) {
    const double lb = log_normal_sf(-b);
    const double la = std::isinf(a) ? kNegInf : log_normal_sf(-a);
    return lb + std::log1p(-std::exp(la - lb));
  }
  const double upper = std::isinf(b) ? 0.0 : 0.5 * std::erfc(b / std::numbers::sqrt2);
  const double lower = std::isinf(a) ? 0.0 : 0.5 * std::erfc(-a / std::numbers::sqrt2);
  return std::log1p(-(upper + lower));
}

}  // namespace nash::math
