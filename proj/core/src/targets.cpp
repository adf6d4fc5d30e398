#include "cmgva/targets.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cmgva/yeo_johnson.hpp"

namespace cmgva {

namespace {

// Equicorrelation matrix R = (1 - rho) I + rho 1 1^T with unit diagonal.
// Its inverse is a I + b 1 1^T and its log determinant is closed form, so
// all quadratic forms cost O(m).
struct Equicorrelation {
  double a = 1.0;
  double b = 0.0;
  double log_det = 0.0;

  Equicorrelation(int m, double rho) {
    const double lower = m > 1 ? -1.0 / (m - 1) : -1.0;
    if (!(rho > lower && rho < 1.0)) {
      throw std::domain_error("equicorrelation: matrix not positive definite");
    }
    const double tail = 1.0 + (m - 1) * rho;
    a = 1.0 / (1.0 - rho);
    b = -rho / ((1.0 - rho) * tail);
    log_det = (m - 1) * std::log(1.0 - rho) + std::log(tail);
  }

  double quad_form(const Eigen::VectorXd& r) const {
    const double s = r.sum();
    return a * r.squaredNorm() + b * s * s;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& r) const {
    return a * r + Eigen::VectorXd::Constant(r.size(), b * r.sum());
  }
};

class TCopulaTarget final : public TargetModel {
 public:
  TCopulaTarget(int m, double rho, double df, double gamma0)
      : m_(m), df_(df), gamma0_(gamma0), corr_(m, rho) {
    if (df <= 0.0) throw std::domain_error("t target: df must be positive");
    // Normalising constant of the multivariate t with correlation matrix R.
    log_const_ = std::lgamma(0.5 * (df_ + m_)) - std::lgamma(0.5 * df_) -
                 0.5 * m_ * std::log(df_ * 3.141592653589793238462643383279502884) -
                 0.5 * corr_.log_det;
  }

  Eigen::Index dim() const override { return m_; }
  std::string name() const override { return "t_copula"; }

  double log_density(const Eigen::VectorXd& theta) const override {
    double log_jac = 0.0;
    Eigen::VectorXd zeta(m_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      zeta[i] = yj_forward(theta[i], gamma0_);
      log_jac += yj_log_deriv(theta[i], gamma0_);
    }
    const double q = corr_.quad_form(zeta);
    return log_const_ - 0.5 * (df_ + m_) * std::log1p(q / df_) + log_jac;
  }

  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& theta) const override {
    Eigen::VectorXd zeta(m_);
    for (Eigen::Index i = 0; i < m_; ++i) zeta[i] = yj_forward(theta[i], gamma0_);
    const double q = corr_.quad_form(zeta);
    const Eigen::VectorXd dzeta = -((df_ + m_) / (df_ + q)) * corr_.solve(zeta);
    Eigen::VectorXd grad(m_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      const YjJacobian j = yj_log_jacobian(theta[i], gamma0_);
      grad[i] = dzeta[i] * j.deriv + j.dlog_dtheta;
    }
    return grad;
  }

 private:
  Eigen::Index m_;
  double df_;
  double gamma0_;
  Equicorrelation corr_;
  double log_const_;
};

class MixtureNormalTarget final : public TargetModel {
 public:
  MixtureNormalTarget(Eigen::MatrixXd modes, double rho)
      : modes_(std::move(modes)), corr_(static_cast<int>(modes_.cols()), rho) {
    if (modes_.rows() < 1) throw std::invalid_argument("mixture target: no modes");
    log_w_ = -std::log(static_cast<double>(modes_.rows()));
    log_norm_ = -0.5 * (modes_.cols() * kLogTwoPi + corr_.log_det);
  }

  Eigen::Index dim() const override { return modes_.cols(); }
  std::string name() const override {
    return modes_.rows() == 1 ? "gaussian" : "mixture_normal";
  }

  double log_density(const Eigen::VectorXd& theta) const override {
    Eigen::VectorXd terms(modes_.rows());
    for (Eigen::Index c = 0; c < modes_.rows(); ++c) {
      const Eigen::VectorXd r = theta - modes_.row(c).transpose();
      terms[c] = log_w_ + log_norm_ - 0.5 * corr_.quad_form(r);
    }
    return log_sum_exp(terms);
  }

  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& theta) const override {
    Eigen::VectorXd terms(modes_.rows());
    for (Eigen::Index c = 0; c < modes_.rows(); ++c) {
      const Eigen::VectorXd r = theta - modes_.row(c).transpose();
      terms[c] = log_w_ + log_norm_ - 0.5 * corr_.quad_form(r);
    }
    const double log_mix = log_sum_exp(terms);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
    for (Eigen::Index c = 0; c < modes_.rows(); ++c) {
      const double resp = std::exp(terms[c] - log_mix);
      if (resp == 0.0) continue;
      const Eigen::VectorXd r = theta - modes_.row(c).transpose();
      grad.noalias() -= resp * corr_.solve(r);
    }
    return grad;
  }

 private:
  Eigen::MatrixXd modes_;
  Equicorrelation corr_;
  double log_w_;
  double log_norm_;
};

// Common coefficient-prior block: standard normal on the intercept, the
// skew-normal mixture on every slope.
double coef_prior_logpdf(const Eigen::VectorXd& b, const SkewMixPrior& prior) {
  double total = log_norm_pdf(b[0]);
  for (Eigen::Index j = 1; j < b.size(); ++j) total += skew_mix_logpdf(b[j], prior);
  return total;
}

Eigen::VectorXd coef_prior_grad(const Eigen::VectorXd& b, const SkewMixPrior& prior) {
  Eigen::VectorXd g(b.size());
  g[0] = -b[0];
  for (Eigen::Index j = 1; j < b.size(); ++j) g[j] = skew_mix_dlogpdf_db(b[j], prior);
  return g;
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class LogisticTarget final : public RegressionModel {
 public:
  LogisticTarget(Eigen::MatrixXd x, Eigen::VectorXd y01, SkewMixPrior prior)
      : x_(std::move(x)), prior_(prior) {
    if (y01.size() != x_.rows()) throw std::invalid_argument("logistic: size mismatch");
    sign_ = 2.0 * y01.array() - 1.0;
  }

  Eigen::Index dim() const override { return x_.cols(); }
  std::string name() const override { return "logistic"; }

  double log_density(const Eigen::VectorXd& b) const override {
    check_dim(b);
    const Eigen::ArrayXd u = sign_ * (x_ * b).array();
    double ll = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) ll -= softplus(-u[i]);
    return ll + coef_prior_logpdf(b, prior_);
  }

  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& b) const override {
    check_dim(b);
    const Eigen::ArrayXd u = sign_ * (x_ * b).array();
    Eigen::VectorXd w(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) w[i] = sign_[i] * sigmoid(-u[i]);
    return x_.transpose() * w + coef_prior_grad(b, prior_);
  }

  double log_pred_density(const Eigen::VectorXd& x, double y,
                          const Eigen::VectorXd& b) const override {
    const double s = 2.0 * y - 1.0;
    return -softplus(-s * x.dot(b));
  }

 private:
  void check_dim(const Eigen::VectorXd& b) const {
    if (b.size() != x_.cols()) throw std::invalid_argument("logistic: theta size mismatch");
  }

  Eigen::MatrixXd x_;
  Eigen::ArrayXd sign_;
  SkewMixPrior prior_;
};

class LinearTarget final : public RegressionModel {
 public:
  LinearTarget(Eigen::MatrixXd x, Eigen::VectorXd y, SkewMixPrior prior)
      : x_(std::move(x)), y_(std::move(y)), prior_(prior) {
    if (y_.size() != x_.rows()) throw std::invalid_argument("linear: size mismatch");
  }

  // theta = (coefficients, log tau2); the noise variance rides along on the
  // log scale with its Jacobian folded into the prior term.
  Eigen::Index dim() const override { return x_.cols() + 1; }
  std::string name() const override { return "linear"; }

  double log_density(const Eigen::VectorXd& theta) const override {
    check_dim(theta);
    const Eigen::Index p = x_.cols();
    const Eigen::VectorXd b = theta.head(p);
    const double log_tau2 = theta[p];
    const double tau2 = std::exp(log_tau2);
    const double n = static_cast<double>(x_.rows());
    const double ssr = (y_ - x_ * b).squaredNorm();
    const double ll = -0.5 * n * (kLogTwoPi + log_tau2) - 0.5 * ssr / tau2;
    // Unit-scale exponential prior on tau2 itself, plus the log-scale
    // Jacobian log tau2' = log tau2.
    const double var_prior = -tau2 + log_tau2;
    return ll + coef_prior_logpdf(b, prior_) + var_prior;
  }

  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& theta) const override {
    check_dim(theta);
    const Eigen::Index p = x_.cols();
    const Eigen::VectorXd b = theta.head(p);
    const double tau2 = std::exp(theta[p]);
    const double n = static_cast<double>(x_.rows());
    const Eigen::VectorXd resid = y_ - x_ * b;
    Eigen::VectorXd grad(p + 1);
    grad.head(p) = x_.transpose() * resid / tau2 + coef_prior_grad(b, prior_);
    grad[p] = -0.5 * n + 0.5 * resid.squaredNorm() / tau2 - tau2 + 1.0;
    return grad;
  }

  double log_pred_density(const Eigen::VectorXd& x, double y,
                          const Eigen::VectorXd& theta) const override {
    const Eigen::Index p = theta.size() - 1;
    const double log_tau2 = theta[p];
    const double resid = y - x.dot(theta.head(p));
    return -0.5 * (kLogTwoPi + log_tau2) - 0.5 * resid * resid / std::exp(log_tau2);
  }

 private:
  void check_dim(const Eigen::VectorXd& theta) const {
    if (theta.size() != x_.cols() + 1) {
      throw std::invalid_argument("linear: theta size mismatch");
    }
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  SkewMixPrior prior_;
};

}  // namespace

double skew_mix_logpdf(double b, const SkewMixPrior& p) {
  if (!(p.w >= 0.0 && p.w <= 1.0)) throw std::domain_error("skew mix: weight outside [0,1]");
  const double l1 = p.w > 0.0
                        ? std::log(p.w) + skew_normal_logpdf(b, p.first)
                        : -std::numeric_limits<double>::infinity();
  const double l2 = p.w < 1.0
                        ? std::log1p(-p.w) + skew_normal_logpdf(b, p.second)
                        : -std::numeric_limits<double>::infinity();
  return log_sum_exp(l1, l2);
}

double skew_mix_dlogpdf_db(double b, const SkewMixPrior& p) {
  const double l1 = p.w > 0.0
                        ? std::log(p.w) + skew_normal_logpdf(b, p.first)
                        : -std::numeric_limits<double>::infinity();
  const double l2 = p.w < 1.0
                        ? std::log1p(-p.w) + skew_normal_logpdf(b, p.second)
                        : -std::numeric_limits<double>::infinity();
  const double l = log_sum_exp(l1, l2);
  double grad = 0.0;
  if (std::isfinite(l1)) grad += std::exp(l1 - l) * skew_normal_dlogpdf_dx(b, p.first);
  if (std::isfinite(l2)) grad += std::exp(l2 - l) * skew_normal_dlogpdf_dx(b, p.second);
  return grad;
}

std::unique_ptr<TargetModel> make_t_copula_target(int m, double rho, double df,
                                                  double gamma0) {
  return std::make_unique<TCopulaTarget>(m, rho, df, gamma0);
}

std::unique_ptr<TargetModel> make_mixture_normal_target(const Eigen::MatrixXd& modes,
                                                        double rho) {
  return std::make_unique<MixtureNormalTarget>(modes, rho);
}

std::unique_ptr<TargetModel> make_mixture_normal_target(int m, int n_modes, double rho,
                                                        Rng& rng) {
  Eigen::MatrixXd modes(n_modes, m);
  for (Eigen::Index c = 0; c < n_modes; ++c) {
    for (Eigen::Index i = 0; i < m; ++i) {
      modes(c, i) = 4.0 * rng.uniform() - 2.0;
    }
  }
  return std::make_unique<MixtureNormalTarget>(std::move(modes), rho);
}

std::unique_ptr<RegressionModel> make_logistic_target(Eigen::MatrixXd x,
                                                      Eigen::VectorXd y01,
                                                      SkewMixPrior prior) {
  return std::make_unique<LogisticTarget>(std::move(x), std::move(y01), prior);
}

std::unique_ptr<RegressionModel> make_linear_target(Eigen::MatrixXd x, Eigen::VectorXd y,
                                                    SkewMixPrior prior) {
  return std::make_unique<LinearTarget>(std::move(x), std::move(y), prior);
}

double posterior_predictive_score(const RegressionModel& model,
                                  const Eigen::MatrixXd& x_test,
                                  const Eigen::VectorXd& y_test,
                                  const Eigen::VectorXd& theta_hat) {
  const Eigen::Index n = x_test.rows();
  if (n == 0) throw std::invalid_argument("predictive score: empty test set");
  if (y_test.size() != n) throw std::invalid_argument("predictive score: size mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    total += model.log_pred_density(x_test.row(i), y_test[i], theta_hat);
  }
  return -total / static_cast<double>(n);
}

}  // namespace cmgva
