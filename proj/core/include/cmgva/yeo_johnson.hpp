#pragma once

#include <Eigen/Core>

namespace cmgva {

// One-parameter monotone power transform used for the marginal adjustment of
// the variational family. For gamma in (0, 2) it maps the real line onto the
// real line:
//
//   theta >= 0:  t(theta) = ((1 + theta)^gamma - 1) / gamma
//   theta <  0:  t(theta) = -((1 - theta)^(2 - gamma) - 1) / (2 - gamma)
//
// with the logarithmic limits log(1 + theta) and -log(1 - theta) as gamma
// approaches 0 and 2. gamma = 1 is the identity. gamma < 1 compresses the
// right tail (maps right skew towards symmetry), gamma > 1 the left tail.
//
// Everything is computed through expm1/log1p so the branches stay accurate
// near gamma = 0, gamma = 2 and theta = 0.

// Exponents within this distance of a branch limit take the log branch.
inline constexpr double kYjBranchEps = 1e-8;

// t_gamma(theta)
double yj_forward(double theta, double gamma);

// t_gamma^{-1}(phi); exact algebraic inverse, defined for all real phi.
double yj_inverse(double phi, double gamma);

// dt/dtheta = (1 + theta)^(gamma - 1) for theta >= 0, (1 - theta)^(1 - gamma)
// for theta < 0. Positive everywhere, so the transform is strictly monotone.
double yj_deriv(double theta, double gamma);
double yj_log_deriv(double theta, double gamma);

struct YjJacobian {
  double deriv;         // dt/dtheta
  double dlog_dtheta;   // d/dtheta log(dt/dtheta) = (gamma - 1)/(1 + |theta|)
};
YjJacobian yj_log_jacobian(double theta, double gamma);

// Sensitivities with respect to gamma, needed when the transform parameters
// are fitted by stochastic gradient.
double yj_dforward_dgamma(double theta, double gamma);
double yj_dlogderiv_dgamma(double theta, double gamma);

// gamma is optimised through the unconstrained parameter psi with
// gamma = 2 * sigmoid(psi), which keeps gamma inside (0, 2).
double gamma_from_psi(double psi);
double psi_from_gamma(double gamma);
// d gamma / d psi expressed through gamma itself: gamma * (2 - gamma) / 2.
double dgamma_dpsi(double gamma);

// Per-coordinate transform of an m-dimensional vector.
class YjVector {
 public:
  // Requires every entry strictly inside (0, 2); throws std::domain_error.
  explicit YjVector(Eigen::VectorXd gamma);

  static YjVector identity(Eigen::Index m) {
    return YjVector(Eigen::VectorXd::Ones(m));
  }

  Eigen::Index dim() const { return gamma_.size(); }
  const Eigen::VectorXd& gamma() const { return gamma_; }
  double gamma(Eigen::Index i) const { return gamma_[i]; }
  void set_gamma(Eigen::Index i, double value);

  Eigen::VectorXd forward(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd inverse(const Eigen::VectorXd& phi) const;
  // sum_i log dt_i/dtheta_i, the log Jacobian of the full transform.
  double log_jacobian(const Eigen::VectorXd& theta) const;

 private:
  Eigen::VectorXd gamma_;
};

}  // namespace cmgva
