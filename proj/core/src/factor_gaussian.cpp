#include "cmgva/factor_gaussian.hpp"

#include <cmath>
#include <stdexcept>

#include "cmgva/special_functions.hpp"

namespace cmgva {

Eigen::MatrixXd Component::covariance() const {
  const Eigen::VectorXd de = clamped_d(d);
  Eigen::MatrixXd sigma = beta * beta.transpose();
  sigma.diagonal() += de.cwiseProduct(de);
  return sigma;
}

bool Component::is_lower_trapezoid(double tol) const {
  for (Eigen::Index j = 1; j < beta.cols(); ++j) {
    for (Eigen::Index i = 0; i < std::min(j, beta.rows()); ++i) {
      if (std::abs(beta(i, j)) > tol) return false;
    }
  }
  return true;
}

void Component::enforce_lower_trapezoid() {
  for (Eigen::Index j = 1; j < beta.cols(); ++j) {
    for (Eigen::Index i = 0; i < std::min(j, beta.rows()); ++i) {
      beta(i, j) = 0.0;
    }
  }
}

Eigen::VectorXd clamped_d(const Eigen::VectorXd& d) {
  Eigen::VectorXd out(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double mag = std::max(std::abs(d[i]), kDFloor);
    out[i] = d[i] < 0.0 ? -mag : mag;
  }
  return out;
}

Eigen::Index vech_size(Eigen::Index m, Eigen::Index r) {
  return m * r - r * (r - 1) / 2;
}

Eigen::VectorXd vech(const Eigen::MatrixXd& beta) {
  const Eigen::Index m = beta.rows(), r = beta.cols();
  Eigen::VectorXd v(vech_size(m, r));
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = j; i < m; ++i) v[pos++] = beta(i, j);
  }
  return v;
}

Eigen::MatrixXd unvech(const Eigen::VectorXd& v, Eigen::Index m, Eigen::Index r) {
  if (v.size() != vech_size(m, r)) {
    throw std::invalid_argument("unvech: size mismatch");
  }
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(m, r);
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = j; i < m; ++i) beta(i, j) = v[pos++];
  }
  return beta;
}

FactorSample sample_component(const Component& c, Rng& rng) {
  FactorSample s;
  s.z = rng.normal_vector(c.rank());
  s.eta = rng.normal_vector(c.dim());
  s.phi = c.mu + c.beta * s.z + clamped_d(c.d).cwiseProduct(s.eta);
  return s;
}

FactorGaussian::FactorGaussian(const Component& c)
    : mu_(c.mu), beta_(c.beta), d_eff_(clamped_d(c.d)) {
  const Eigen::Index m = c.dim(), r = c.rank();
  if (c.beta.rows() != m || c.d.size() != m) {
    throw std::invalid_argument("FactorGaussian: inconsistent dimensions");
  }
  dinv2_ = d_eff_.cwiseProduct(d_eff_).cwiseInverse();

  // M = D^{-2} beta, A = I + beta^T M.
  Eigen::MatrixXd scaled = dinv2_.asDiagonal() * beta_;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(r, r);
  a.noalias() += beta_.transpose() * scaled;
  llt_a_.compute(a);
  if (llt_a_.info() != Eigen::Success) {
    throw std::runtime_error("FactorGaussian: Cholesky of capacitance failed");
  }

  double log_det_a = 0.0;
  for (Eigen::Index i = 0; i < r; ++i) {
    log_det_a += 2.0 * std::log(llt_a_.matrixLLT()(i, i));
  }
  log_det_ = log_det_a;
  for (Eigen::Index i = 0; i < m; ++i) log_det_ += 2.0 * std::log(std::abs(d_eff_[i]));

  sigma_inv_beta_ = llt_a_.solve(scaled.transpose()).transpose();
  sigma_inv_diag_ = dinv2_;
  for (Eigen::Index i = 0; i < m; ++i) {
    sigma_inv_diag_[i] -= sigma_inv_beta_.row(i).dot(scaled.row(i));
  }
}

Eigen::VectorXd FactorGaussian::solve(const Eigen::VectorXd& x) const {
  Eigen::VectorXd w = dinv2_.cwiseProduct(x);
  Eigen::VectorXd u = llt_a_.solve(beta_.transpose() * w);
  w.noalias() -= dinv2_.cwiseProduct(beta_ * u);
  return w;
}

double FactorGaussian::quad_form(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd w = dinv2_.cwiseProduct(x);
  const Eigen::VectorXd y = beta_.transpose() * w;
  return x.dot(w) - y.dot(llt_a_.solve(y));
}

double FactorGaussian::log_density(const Eigen::VectorXd& phi) const {
  const Eigen::VectorXd r = phi - mu_;
  return -0.5 * (static_cast<double>(dim()) * kLogTwoPi + log_det_ + quad_form(r));
}

Eigen::VectorXd FactorGaussian::grad_log_density(const Eigen::VectorXd& phi) const {
  return -solve(phi - mu_);
}

Eigen::MatrixXd score_beta(const FactorGaussian& fg, const Eigen::VectorXd& s) {
  Eigen::MatrixXd g = -fg.sigma_inv_beta();
  g.noalias() += s * (fg.beta().transpose() * s).transpose();
  return g;
}

Eigen::VectorXd score_d(const FactorGaussian& fg, const Eigen::VectorXd& s) {
  return fg.d_eff().cwiseProduct(s.cwiseProduct(s) - fg.sigma_inv_diag());
}

}  // namespace cmgva
