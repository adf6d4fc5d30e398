#include "cmgva/special_functions.hpp"

#include <cmath>
#include <limits>

namespace cmgva {

double log_norm_pdf(double x) {
  return -0.5 * (kLogTwoPi + x * x);
}

double log_norm_cdf(double x) {
  if (x > -20.0) {
    // Phi(x) = erfc(-x / sqrt(2)) / 2; erfc keeps full precision here.
    return std::log(0.5 * std::erfc(-x * 0.7071067811865475244));
  }
  // Asymptotic series in 1/x^2; four terms give ~1e-10 relative accuracy at
  // the crossover and improve further into the tail.
  const double inv2 = 1.0 / (x * x);
  const double series = -inv2 * (1.0 - inv2 * (3.0 - inv2 * (15.0 - inv2 * 105.0)));
  return -0.5 * x * x - std::log(-x) - 0.5 * kLogTwoPi + std::log1p(series);
}

double norm_mills(double x) {
  return std::exp(log_norm_pdf(x) - log_norm_cdf(x));
}

double skew_normal_logpdf(double x, const SkewNormalParams& p) {
  const double z = (x - p.location) / p.scale;
  return std::log(2.0 / p.scale) + log_norm_pdf(z) + log_norm_cdf(p.shape * z);
}

double skew_normal_dlogpdf_dx(double x, const SkewNormalParams& p) {
  const double z = (x - p.location) / p.scale;
  return (-z + p.shape * norm_mills(p.shape * z)) / p.scale;
}

double log_sum_exp(const Eigen::VectorXd& v) {
  double vmax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] > vmax) vmax = v[i];
  }
  if (!std::isfinite(vmax)) return vmax;
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) total += std::exp(v[i] - vmax);
  return vmax + std::log(total);
}

double log_sum_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (!std::isfinite(a)) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace cmgva
