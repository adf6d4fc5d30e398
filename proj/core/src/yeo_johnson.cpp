#include "cmgva/yeo_johnson.hpp"

#include <cmath>
#include <stdexcept>

namespace cmgva {

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 2.0)) {
    throw std::domain_error("yeo-johnson: gamma outside [0, 2]");
  }
}

}  // namespace

double yj_forward(double theta, double gamma) {
  check_gamma(gamma);
  if (theta >= 0.0) {
    const double length = std::log1p(theta);
    if (gamma < kYjBranchEps) return length;
    // ((1 + theta)^gamma - 1) / gamma, written to avoid cancellation.
    return std::expm1(gamma * length) / gamma;
  }
  const double s = 2.0 - gamma;
  const double length = std::log1p(-theta);
  if (s < kYjBranchEps) return -length;
  return -std::expm1(s * length) / s;
}

double yj_inverse(double phi, double gamma) {
  check_gamma(gamma);
  if (phi >= 0.0) {
    if (gamma < kYjBranchEps) return std::expm1(phi);
    // (gamma * phi + 1)^(1/gamma) - 1; the argument of log1p is positive.
    return std::expm1(std::log1p(gamma * phi) / gamma);
  }
  const double s = 2.0 - gamma;
  if (s < kYjBranchEps) return -std::expm1(-phi);
  return -std::expm1(std::log1p(-s * phi) / s);
}

double yj_log_deriv(double theta, double gamma) {
  check_gamma(gamma);
  if (theta >= 0.0) return (gamma - 1.0) * std::log1p(theta);
  return (1.0 - gamma) * std::log1p(-theta);
}

double yj_deriv(double theta, double gamma) {
  return std::exp(yj_log_deriv(theta, gamma));
}

YjJacobian yj_log_jacobian(double theta, double gamma) {
  check_gamma(gamma);
  YjJacobian out;
  out.deriv = yj_deriv(theta, gamma);
  // Both branches reduce to (gamma - 1) / (1 + |theta|).
  out.dlog_dtheta = (gamma - 1.0) / (1.0 + std::abs(theta));
  return out;
}

namespace {

// (e^u (u - 1) + 1) / g^2 for u = g * length, the common kernel of the two
// gamma-sensitivity branches. Rewritten as (u e^u - expm1(u)) / g^2, which
// loses at most ~u relative precision; below the crossover the series
// length^2 / 2 + g * length^3 / 3 takes over.
double dgamma_kernel(double g, double length) {
  const double u = g * length;
  if (std::abs(u) < 1e-8) {
    return length * length * (0.5 + g * length / 3.0);
  }
  return (u * std::exp(u) - std::expm1(u)) / (g * g);
}

}  // namespace

double yj_dforward_dgamma(double theta, double gamma) {
  check_gamma(gamma);
  if (theta >= 0.0) return dgamma_kernel(gamma, std::log1p(theta));
  // For theta < 0 the transform depends on gamma through s = 2 - gamma and
  // d/dgamma = -d/ds; the sign cancels against the leading minus sign.
  return dgamma_kernel(2.0 - gamma, std::log1p(-theta));
}

double yj_dlogderiv_dgamma(double theta, double gamma) {
  check_gamma(gamma);
  return theta >= 0.0 ? std::log1p(theta) : -std::log1p(-theta);
}

double gamma_from_psi(double psi) {
  return 2.0 / (1.0 + std::exp(-psi));
}

double psi_from_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 2.0)) {
    throw std::domain_error("psi_from_gamma: gamma outside (0, 2)");
  }
  return std::log(gamma / (2.0 - gamma));
}

double dgamma_dpsi(double gamma) {
  return gamma * (2.0 - gamma) / 2.0;
}

YjVector::YjVector(Eigen::VectorXd gamma) : gamma_(std::move(gamma)) {
  for (Eigen::Index i = 0; i < gamma_.size(); ++i) {
    if (!(gamma_[i] > 0.0 && gamma_[i] < 2.0)) {
      throw std::domain_error("YjVector: gamma entries must lie in (0, 2)");
    }
  }
}

void YjVector::set_gamma(Eigen::Index i, double value) {
  if (!(value > 0.0 && value < 2.0)) {
    throw std::domain_error("YjVector: gamma entries must lie in (0, 2)");
  }
  gamma_[i] = value;
}

Eigen::VectorXd YjVector::forward(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd phi(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    phi[i] = yj_forward(theta[i], gamma_[i]);
  }
  return phi;
}

Eigen::VectorXd YjVector::inverse(const Eigen::VectorXd& phi) const {
  Eigen::VectorXd theta(phi.size());
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    theta[i] = yj_inverse(phi[i], gamma_[i]);
  }
  return theta;
}

double YjVector::log_jacobian(const Eigen::VectorXd& theta) const {
  double total = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    total += yj_log_deriv(theta[i], gamma_[i]);
  }
  return total;
}

}  // namespace cmgva
