#pragma once

#include <memory>
#include <string>

#include <Eigen/Core>

#include "cmgva/rng.hpp"
#include "cmgva/special_functions.hpp"

namespace cmgva {

// A posterior (or test density) the fitter draws stochastic gradients from.
// log_density may omit any normalising constant. Implementations must be
// immutable after construction: evaluations can run concurrently.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double log_density(const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::VectorXd grad_log_density(const Eigen::VectorXd& theta) const = 0;
  virtual std::string name() const = 0;
};

// Regression posteriors additionally expose the pointwise predictive density
// at a parameter value, for held-out scoring.
class RegressionModel : public TargetModel {
 public:
  // log p(y | x, theta)
  virtual double log_pred_density(const Eigen::VectorXd& x, double y,
                                  const Eigen::VectorXd& theta) const = 0;
};

// Heavy-tailed smooth test density: theta_i is the gamma0-transform preimage
// of zeta_i, where zeta follows a multivariate Student-t with df degrees of
// freedom and equicorrelation rho. The transform Jacobian is included, so
// this density is normalised. gamma0 = 1 and m = 1 reduce to a univariate t.
std::unique_ptr<TargetModel> make_t_copula_target(int m, double rho, double df,
                                                  double gamma0);

// Equally weighted normal mixture with the given mode centres (one row per
// mode) and shared equicorrelation-rho unit-variance covariance. A single
// mode gives a plain multivariate normal.
std::unique_ptr<TargetModel> make_mixture_normal_target(const Eigen::MatrixXd& modes,
                                                        double rho);
// Convenience: n_modes mode centres drawn uniformly from [-2, 2]^m.
std::unique_ptr<TargetModel> make_mixture_normal_target(int m, int n_modes, double rho,
                                                        Rng& rng);

// Two-piece skew-normal prior used for regression coefficients: an equal or
// weighted mix of two skew normals, log-density
//   log[ 2 w phi(b; mu1, s1) Phi(a1 (b - mu1)/s1)
//        + 2 (1 - w) phi(b; mu2, s2) Phi(a2 (b - mu2)/s2) ].
// The defaults (strong negative shapes, means 0 and 1) concentrate mass near
// zero yet keep a second bump near one, a spike-and-slab-like shape that
// stays smooth.
struct SkewMixPrior {
  SkewNormalParams first{0.0, 1.0, -20.0};
  SkewNormalParams second{1.0, 1.0, -20.0};
  double w = 0.5;
};

double skew_mix_logpdf(double b, const SkewMixPrior& p);
double skew_mix_dlogpdf_db(double b, const SkewMixPrior& p);

// Bayesian logistic regression: theta = b (one coefficient per column of X,
// the first column being the intercept). Log-likelihood in +/-1 coding
//   sum_i [ s_i x_i' b - log(1 + exp(s_i x_i' b)) ],  s_i = 2 y_i - 1,
// standard normal prior on the intercept, skew-mix prior on each slope.
std::unique_ptr<RegressionModel> make_logistic_target(Eigen::MatrixXd x,
                                                      Eigen::VectorXd y01,
                                                      SkewMixPrior prior = {});

// Bayesian linear regression: theta = (b, log tau2); Gaussian likelihood with
// variance tau2, the same coefficient priors as the logistic model, and a
// unit-scale exponential (Gamma(1,1)) prior on tau2 carried to the log scale
// with its Jacobian.
std::unique_ptr<RegressionModel> make_linear_target(Eigen::MatrixXd x,
                                                    Eigen::VectorXd y,
                                                    SkewMixPrior prior = {});

// Average held-out negative log predictive density at a parameter point:
//   -(1/n) sum_i log p(y_i | x_i, theta_hat).
double posterior_predictive_score(const RegressionModel& model,
                                  const Eigen::MatrixXd& x_test,
                                  const Eigen::VectorXd& y_test,
                                  const Eigen::VectorXd& theta_hat);

}  // namespace cmgva
