#pragma once

#include <Eigen/Core>

#include "cmgva/mixture.hpp"
#include "cmgva/rng.hpp"
#include "cmgva/targets.hpp"

namespace cmgva {

// Score-function machinery for the evidence lower bound
//   L(lambda) = E_q[ log g(theta) - log q_lambda(theta) ].
// Its gradient is E_q[ (log g - log q) * d/dlambda log q_lambda ]; per-sample
// products of the log ratio with the score are averaged, optionally after
// subtracting a per-coordinate control variate from the log ratio.

// One Monte Carlo batch: per-sample draws, log ratios f_s = log g - log q,
// and the scores of the trial component's loading vector (free entries of
// beta) and idiosyncratic scale.
struct GradientBatch {
  Eigen::MatrixXd theta;       // S x m, one draw per row
  Eigen::MatrixXd phi;         // S x m
  std::vector<int> comp;       // component index per draw
  Eigen::VectorXd log_ratio;   // S
  Eigen::MatrixXd score_beta;  // S x n_beta
  Eigen::MatrixXd score_d;     // S x m

  Eigen::Index size() const { return log_ratio.size(); }
};

// Per-coordinate regression coefficients c_i = cov(f g_i, g_i) / var(g_i),
// estimated from a batch and applied to the next one (lagging keeps the
// estimator unbiased). A zero-variance score gets c_i = 0.
struct ControlVariates {
  Eigen::VectorXd c_beta;
  Eigen::VectorXd c_d;

  static ControlVariates zero(Eigen::Index n_beta, Eigen::Index n_d) {
    return {Eigen::VectorXd::Zero(n_beta), Eigen::VectorXd::Zero(n_d)};
  }
};

struct GradientEstimate {
  Eigen::VectorXd grad_beta;
  Eigen::VectorXd grad_d;
};

// Plain Monte Carlo ELBO estimate from n_samples fresh draws.
double elbo_estimate(const TargetModel& target, const CmgvaState& state,
                     int n_samples, Rng& rng);

// Scores of the boosted mixture log density with respect to the trial
// component's parameters at one draw. Both reduce to the plain Gaussian
// scores multiplied by the sample's weight pi_new * N_cand(phi) / dtot:
//   d log q / d vech(beta) = w * vech(-Sigma^{-1} beta + s (beta^T s)^T)
//   d log q / d d_i        = w * d_i (s_i^2 - (Sigma^{-1})_{ii})
// with s = Sigma^{-1} (phi - mu). pi_new = 0 gives exact zeros.
GradientEstimate score_grads_beta_d(const Eigen::VectorXd& phi, const CmgvaState& state,
                                    const Component& cand, double pi_new);
// Cached-factorisation variant: boosted_eval's last component is the trial
// one and cand_fg must alias it.
GradientEstimate score_grads_beta_d(const Eigen::VectorXd& phi,
                                    const MixtureEvaluator& boosted_eval,
                                    double pi_new);

// d/dtheta log q_lambda(theta) of the full mixture, transform included.
Eigen::VectorXd grad_logq_theta(const Eigen::VectorXd& theta, const CmgvaState& state);

// Coefficients from a finished batch, for use on the next one.
ControlVariates control_variate_coeffs(const GradientBatch& batch);

struct CvGradientResult {
  Eigen::VectorXd grad_beta;
  Eigen::VectorXd grad_d;
  GradientBatch batch;
};

// Draws n_samples fresh samples from the boosted mixture, evaluates log
// ratios and trial-component scores, and averages
//   g_i = mean_s[ (f_s - c_i) * score_{s,i} ]
// under the supplied (lagged) coefficients. The batch is returned so the
// caller can fit the next iteration's coefficients from it. cv entries must
// be sized to the scores or empty (treated as zero, the first iteration).
CvGradientResult cv_gradient_estimate(const TargetModel& target, const CmgvaState& state,
                                      const Component& cand, double pi_new,
                                      const ControlVariates& cv, int n_samples, Rng& rng,
                                      int threads = 1);

// Target log densities (and optionally gradients) for a batch of points.
// Partitioned over at most `threads` std::threads writing disjoint slots, so
// results are identical for every thread count.
void eval_target_batch(const TargetModel& target, const std::vector<Eigen::VectorXd>& thetas,
                       int threads, Eigen::VectorXd& log_g,
                       std::vector<Eigen::VectorXd>* grads = nullptr);

// Thread count resolution: the CMGVA_THREADS environment variable overrides
// the configured value; unset and unconfigured default to 1.
int resolve_thread_count(int configured);

// Generic per-coordinate versions shared by the first-component fit, which
// optimises a wider parameter block than (beta, d).
Eigen::VectorXd cv_coeffs(const Eigen::VectorXd& f, const Eigen::MatrixXd& scores);
Eigen::VectorXd cv_estimate(const Eigen::VectorXd& f, const Eigen::MatrixXd& scores,
                            const Eigen::VectorXd& coeffs);

}  // namespace cmgva
