// Log-space combinatorics and Gaussian densities shared by the samplers.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace busod {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// log(n!) with a cached table for the small counts that dominate here.
inline double log_factorial(int n) {
  static const std::vector<double> table = [] {
    std::vector<double> t(2048);
    t[0] = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) t[k] = t[k - 1] + std::log(static_cast<double>(k));
    return t;
  }();
  if (n < 0) return neg_inf;
  if (static_cast<std::size_t>(n) < table.size()) return table[static_cast<std::size_t>(n)];
  return std::lgamma(static_cast<double>(n) + 1.0);
}

// log C(n, k); -inf outside the support.
inline double log_binom(int n, int k) {
  if (k < 0 || k > n) return neg_inf;
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

// log N(x; mu, var)
inline double log_normal_pdf(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (std::log(2.0 * M_PI * var) + d * d / var);
}

}  // namespace busod
