#pragma once

#include <Eigen/Core>

namespace cmgva {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112353;

// log of the standard normal density.
double log_norm_pdf(double x);

// log of the standard normal CDF, accurate over the whole real line. The
// far left tail (x < -20) switches to the asymptotic expansion
//   log Phi(x) = -x^2/2 - log(-x) - log(2 pi)/2 + log1p(-1/x^2 + 3/x^4 - ...)
// so that shape parameters as extreme as alpha = -20 in skew-normal priors
// keep finite, differentiable values.
double log_norm_cdf(double x);

// phi(x) / Phi(x), the derivative of log_norm_cdf. Evaluated in log space so
// it neither underflows for large x nor overflows in the left tail, where it
// approaches -x.
double norm_mills(double x);

// Skew-normal distribution with density
//   2/scale * phi((x - location)/scale) * Phi(shape * (x - location)/scale).
struct SkewNormalParams {
  double location = 0.0;
  double scale = 1.0;
  double shape = 0.0;
};

double skew_normal_logpdf(double x, const SkewNormalParams& p);
// d/dx of the above; used by score and target gradients.
double skew_normal_dlogpdf_dx(double x, const SkewNormalParams& p);

// max-shifted log(sum(exp(v))); returns -inf for an all -inf input.
double log_sum_exp(const Eigen::VectorXd& v);
double log_sum_exp(double a, double b);

}  // namespace cmgva
