#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cmgva/rng.hpp"

namespace cmgva {

// Solves treat |d_i| below this as equal to it, so a collapsing idiosyncratic
// scale cannot make the covariance numerically singular.
inline constexpr double kDFloor = 1e-6;

// One Gaussian component in transformed space: N(mu, beta beta^T + D^2) with
// beta an m x r loading matrix whose strict upper triangle is zero (for
// identifiability) and D = diag(d). Only d^2 enters the covariance, so the
// sign of d is free; optimisers may drive entries negative without harm.
struct Component {
  Eigen::VectorXd mu;
  Eigen::MatrixXd beta;
  Eigen::VectorXd d;

  Eigen::Index dim() const { return mu.size(); }
  Eigen::Index rank() const { return beta.cols(); }

  // Dense beta beta^T + D^2, using the clamped d. O(m^2 r); test/oracle paths.
  Eigen::MatrixXd covariance() const;
  bool is_lower_trapezoid(double tol = 0.0) const;
  void enforce_lower_trapezoid();
};

// d with the floor applied: sign(d_i) * max(|d_i|, kDFloor).
Eigen::VectorXd clamped_d(const Eigen::VectorXd& d);

// Free entries of beta are the lower-trapezoid positions (row >= col), packed
// in column-major order.
Eigen::Index vech_size(Eigen::Index m, Eigen::Index r);
Eigen::VectorXd vech(const Eigen::MatrixXd& beta);
Eigen::MatrixXd unvech(const Eigen::VectorXd& v, Eigen::Index m, Eigen::Index r);

struct FactorSample {
  Eigen::VectorXd phi;   // mu + beta z + d .* eta
  Eigen::VectorXd z;     // r-dimensional factor draw
  Eigen::VectorXd eta;   // m-dimensional idiosyncratic draw
};

// Draws z before eta from the shared source; latents are returned so callers
// can reuse them.
FactorSample sample_component(const Component& c, Rng& rng);

// Cached factorisation of Sigma = beta beta^T + D^2. All solves go through
// the Woodbury identity
//   Sigma^{-1} = D^{-2} - D^{-2} beta A^{-1} beta^T D^{-2},
//   A = I_r + beta^T D^{-2} beta,
// and the determinant through the matrix determinant lemma
//   log det Sigma = log det A + sum_i log d_i^2.
// Setup costs O(m r^2) plus the O(r^3) Cholesky of A; each solve is O(m r).
class FactorGaussian {
 public:
  explicit FactorGaussian(const Component& c);

  Eigen::Index dim() const { return mu_.size(); }
  Eigen::Index rank() const { return beta_.cols(); }
  double log_det() const { return log_det_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::VectorXd& d_eff() const { return d_eff_; }
  const Eigen::MatrixXd& beta() const { return beta_; }

  // Sigma^{-1} x
  Eigen::VectorXd solve(const Eigen::VectorXd& x) const;
  // x^T Sigma^{-1} x without forming the solve
  double quad_form(const Eigen::VectorXd& x) const;
  double log_density(const Eigen::VectorXd& phi) const;
  // -Sigma^{-1} (phi - mu)
  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& phi) const;

  // Sigma^{-1} beta; collapses to D^{-2} beta A^{-1} since beta^T D^{-2} beta
  // equals A - I.
  const Eigen::MatrixXd& sigma_inv_beta() const { return sigma_inv_beta_; }
  const Eigen::VectorXd& sigma_inv_diag() const { return sigma_inv_diag_; }

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd beta_;
  Eigen::VectorXd d_eff_;
  Eigen::VectorXd dinv2_;
  Eigen::LLT<Eigen::MatrixXd> llt_a_;
  double log_det_ = 0.0;
  Eigen::MatrixXd sigma_inv_beta_;
  Eigen::VectorXd sigma_inv_diag_;
};

// Gradients of log N(phi; mu, Sigma) in the component's own parameters, given
// s = Sigma^{-1} (phi - mu):
//   d/d beta  : -Sigma^{-1} beta + s (beta^T s)^T          (m x r)
//   d/d d_i   : d_i (s_i^2 - (Sigma^{-1})_{ii})
// score_beta returns the full m x r matrix; pack with vech() for optimisers.
Eigen::MatrixXd score_beta(const FactorGaussian& fg, const Eigen::VectorXd& s);
Eigen::VectorXd score_d(const FactorGaussian& fg, const Eigen::VectorXd& s);

}  // namespace cmgva
