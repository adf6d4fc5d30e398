#pragma once

#include <Eigen/Core>

#include "cmgva/factor_gaussian.hpp"
#include "cmgva/mixture.hpp"

namespace cmgva {

// Choice of the curvature used to precondition the d-gradient. The variance
// form builds the diagonal
//   v1_i = d_i^2 - 2 beta_i^2 / d_i^4,
// the precision form replaces the leading term by 1 / d_i^2:
//   v1_i = 1 / d_i^2 - 2 beta_i^2 / d_i^4.
// The two agree at |d| = 1, and both drop the Woodbury factor
// c = 1 / (1 + kappa1) from the exact Fisher block, which is only harmless
// when beta^2 << d^2; outside that regime their entries go negative and the
// preconditioned step loses sign coherence. The exact form keeps c:
//   F_d = Diag(2 (1 - 2 c beta_i^2 / d_i^2) / d_i^2) + u u^T,
//   u_i = sqrt(2) c beta_i^2 / d_i^3,
// which is the Fisher information of d in N(mu, beta beta^T + D^2) at rank
// one, positive definite for every (beta, d). The boosting configuration
// defaults to it (see BoostConfig).
enum class DCurvature { kVariance, kPrecision, kExact };

struct NaturalGradientOptions {
  DCurvature d_curvature = DCurvature::kVariance;
};

// Approximate Fisher preconditioning of the (beta, d) gradient of a rank-one
// component, elementwise in closed form:
//   kappa1 = sum_i beta_i^2 / d_i^2
//   gnat_beta = (1 + kappa1) / (2 kappa1) * ((g_beta . beta) beta + d^2 ∘ g_beta)
//   v2_i = beta_i^2 / d_i^3,  kappa2 = 1 / (2 (1 + sum_i v2_i^2 / v1_i))
//   gnat_d = (1/2) v1^{-1} ∘ g_d + kappa2 ((v1^{-1} ∘ v2) . g_d) (v1^{-1} ∘ v2)
// kappa1 = 0 (all-zero loadings) falls back to gnat_beta = d^2 ∘ g_beta, and
// zero v1 entries are perturbed to 1e-12. |d_i| is floored at kDFloor.
struct NaturalGradient {
  Eigen::VectorXd beta;
  Eigen::VectorXd d;
};

NaturalGradient natural_gradient_beta_d(const Eigen::VectorXd& beta,
                                        const Eigen::VectorXd& d,
                                        const Eigen::VectorXd& g_beta,
                                        const Eigen::VectorXd& g_d,
                                        const NaturalGradientOptions& opt = {});

// Natural-gradient ascent step on the trial component's weight, taken in the
// log-odds parameterisation rho = log((1 - pi) / pi):
//   rho <- rho + a * mean_s[ (delta1_s - delta2_s) * (f_s - fbar) ],
//   pi  <- 1 / (1 + exp(rho)),
// where f_s is the sample's log ratio and fbar its batch mean (omitted when
// center is false). Centering costs nothing in expectation, because
// E[(delta1 - delta2)] vanishes at fixed parameters, and damps the variance.
double update_pi(double pi_new, const Eigen::VectorXd& log_ratio,
                 const std::vector<Responsibilities>& resp, double a,
                 bool center = true);

// Natural-gradient ascent step on the trial component's mean:
//   mu <- mu + a * mean_s[ delta2_s * (beta beta^T + D^2) grad_diff_s ],
// grad_diff_s = d/dtheta log g(theta_s) - d/dtheta log q(theta_s). The
// covariance product uses the rank-one-plus-diagonal structure directly.
Eigen::VectorXd update_mu(const Eigen::VectorXd& mu, const Component& cand,
                          const Eigen::VectorXd& delta2,
                          const Eigen::MatrixXd& grad_diffs, double a);

}  // namespace cmgva
