#include "cmgva/dfnn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmgva {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kGammaScale = 10.0;  // prior scale of sigma2 and tau2

void validate_spec(const DfnnSpec& spec) {
  if (spec.layers.size() < 2 || spec.layers.back() != 1) {
    throw std::invalid_argument("dfnn: layers must end in a single output");
  }
  for (int width : spec.layers) {
    if (width < 1) throw std::invalid_argument("dfnn: layer widths must be positive");
  }
  if (spec.hidden_bias.size() != spec.layers.size() - 2) {
    throw std::invalid_argument("dfnn: one bias flag per hidden layer required");
  }
}
}  // namespace

int DfnnSpec::parameter_count() const {
  validate_spec(*this);
  const size_t hidden = layers.size() - 2;
  int count = 0;
  for (size_t l = 0; l < hidden; ++l) {
    count += layers[l] * layers[l + 1];
    if (hidden_bias[l]) count += layers[l + 1];
  }
  count += layers[hidden];  // output slopes, one per last hidden unit
  if (output_bias) count += 1;
  return count;
}

int DfnnSpec::theta_dim() const { return parameter_count() + 2; }

DfnnSpec DfnnSpec::reference_wide() {
  DfnnSpec s;
  s.layers = {11, 5, 5, 1};
  s.hidden_bias = {false, true};
  s.output_bias = true;
  return s;
}

DfnnSpec DfnnSpec::reference_narrow() {
  DfnnSpec s;
  s.layers = {9, 5, 5, 1};
  s.hidden_bias = {false, false};
  s.output_bias = false;
  return s;
}

namespace {

// theta layout: per hidden layer its weight matrix (column-major) then its
// bias when flagged; then the output intercept (when present) and slopes;
// finally log sigma2 and log tau2. Every hidden weight, hidden bias and
// output slope carries the skew-normal prior; the intercept is flat.
class DfnnTarget final : public RegressionModel {
 public:
  DfnnTarget(DfnnSpec spec, Eigen::MatrixXd x, Eigen::VectorXd y)
      : spec_(std::move(spec)), x_(std::move(x)), y_(std::move(y)) {
    validate_spec(spec_);
    if (x_.cols() != spec_.layers.front()) {
      throw std::invalid_argument("dfnn: design width != input layer width");
    }
    if (y_.size() != x_.rows()) throw std::invalid_argument("dfnn: size mismatch");
    hidden_ = spec_.layers.size() - 2;
    int off = 0;
    for (size_t l = 0; l < hidden_; ++l) {
      w_offset_.push_back(off);
      off += spec_.layers[l] * spec_.layers[l + 1];
      bias_offset_.push_back(spec_.hidden_bias[l] ? off : -1);
      if (spec_.hidden_bias[l]) off += spec_.layers[l + 1];
    }
    out_offset_ = off;
    off += (spec_.output_bias ? 1 : 0) + spec_.layers[hidden_];
    n_network_ = off;
    if (n_network_ != spec_.parameter_count()) {
      throw std::logic_error("dfnn: offset bookkeeping mismatch");
    }
  }

  Eigen::Index dim() const override { return n_network_ + 2; }
  std::string name() const override { return "dfnn"; }

  double log_density(const Eigen::VectorXd& theta) const override {
    check_dim(theta);
    const double log_sigma2 = theta[n_network_];
    const double log_tau2 = theta[n_network_ + 1];
    const double tau2 = std::exp(log_tau2);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < x_.rows(); ++i) {
      const double pred = forward(theta, x_.row(i).transpose());
      if (!std::isfinite(pred)) return kNegInf;
      const double r = y_[i] - pred;
      ll += 0.5 * (log_tau2 - kLogTwoPi) - 0.5 * tau2 * r * r;
    }
    return ll + prior_logpdf(theta, log_sigma2, log_tau2);
  }

  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& theta) const override {
    check_dim(theta);
    const Eigen::Index p = dim();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    const double log_sigma2 = theta[n_network_];
    const double log_tau2 = theta[n_network_ + 1];
    const double tau2 = std::exp(log_tau2);

    // Likelihood part by reverse accumulation, one observation at a time.
    std::vector<Eigen::VectorXd> z(hidden_ + 1), pre(hidden_);
    for (Eigen::Index i = 0; i < x_.rows(); ++i) {
      z[0] = x_.row(i).transpose();
      for (size_t l = 0; l < hidden_; ++l) {
        pre[l] = weight_map(theta, l) * z[l];
        if (bias_offset_[l] >= 0) pre[l] += bias_map(theta, l);
        z[l + 1] = pre[l].cwiseMax(0.0);
      }
      const Eigen::VectorXd& top = z[hidden_];
      double pred = slopes_map(theta).dot(top);
      if (spec_.output_bias) pred += theta[out_offset_];
      if (!std::isfinite(pred)) return Eigen::VectorXd::Zero(p);

      const double dpred = tau2 * (y_[i] - pred);
      if (spec_.output_bias) grad[out_offset_] += dpred;
      slopes_grad(grad) += dpred * top;
      Eigen::VectorXd delta = dpred * slopes_map(theta);
      for (size_t l = hidden_; l-- > 0;) {
        // ReLU subgradient: zero at and below the kink.
        for (Eigen::Index u = 0; u < delta.size(); ++u) {
          if (pre[l][u] <= 0.0) delta[u] = 0.0;
        }
        weight_grad(grad, l) += delta * z[l].transpose();
        if (bias_offset_[l] >= 0) bias_grad(grad, l) += delta;
        if (l > 0) delta = weight_map(theta, l).transpose() * delta;
      }
      const double r = y_[i] - pred;
      grad[n_network_ + 1] += 0.5 - 0.5 * tau2 * r * r;
    }

    add_prior_grad(theta, log_sigma2, tau2, grad);
    return grad;
  }

  double log_pred_density(const Eigen::VectorXd& x, double y,
                          const Eigen::VectorXd& theta) const override {
    const double log_tau2 = theta[n_network_ + 1];
    const double r = y - forward(theta, x);
    return 0.5 * (log_tau2 - kLogTwoPi) - 0.5 * std::exp(log_tau2) * r * r;
  }

 private:
  void check_dim(const Eigen::VectorXd& theta) const {
    if (theta.size() != dim()) throw std::invalid_argument("dfnn: theta size mismatch");
  }

  Eigen::Map<const Eigen::MatrixXd> weight_map(const Eigen::VectorXd& theta,
                                               size_t l) const {
    return {theta.data() + w_offset_[l], spec_.layers[l + 1], spec_.layers[l]};
  }
  Eigen::Map<const Eigen::VectorXd> bias_map(const Eigen::VectorXd& theta,
                                             size_t l) const {
    return {theta.data() + bias_offset_[l], spec_.layers[l + 1]};
  }
  Eigen::Map<const Eigen::VectorXd> slopes_map(const Eigen::VectorXd& theta) const {
    return {theta.data() + out_offset_ + (spec_.output_bias ? 1 : 0),
            spec_.layers[hidden_]};
  }
  Eigen::Map<Eigen::MatrixXd> weight_grad(Eigen::VectorXd& grad, size_t l) const {
    return {grad.data() + w_offset_[l], spec_.layers[l + 1], spec_.layers[l]};
  }
  Eigen::Map<Eigen::VectorXd> bias_grad(Eigen::VectorXd& grad, size_t l) const {
    return {grad.data() + bias_offset_[l], spec_.layers[l + 1]};
  }
  Eigen::Map<Eigen::VectorXd> slopes_grad(Eigen::VectorXd& grad) const {
    return {grad.data() + out_offset_ + (spec_.output_bias ? 1 : 0),
            spec_.layers[hidden_]};
  }

  double forward(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const {
    Eigen::VectorXd z = x;
    for (size_t l = 0; l < hidden_; ++l) {
      Eigen::VectorXd pre = weight_map(theta, l) * z;
      if (bias_offset_[l] >= 0) pre += bias_map(theta, l);
      z = pre.cwiseMax(0.0);
    }
    double pred = slopes_map(theta).dot(z);
    if (spec_.output_bias) pred += theta[out_offset_];
    return pred;
  }

  // Indices of theta under the skew-normal prior: all network parameters
  // except the flat output intercept.
  bool has_sn_prior(int idx) const {
    return idx < n_network_ && !(spec_.output_bias && idx == out_offset_);
  }

  double prior_logpdf(const Eigen::VectorXd& theta, double log_sigma2,
                      double log_tau2) const {
    const double sigma = std::exp(0.5 * log_sigma2);
    const SkewNormalParams sn{0.0, 1.0 / sigma, spec_.alpha};
    double total = 0.0;
    for (int idx = 0; idx < n_network_; ++idx) {
      if (has_sn_prior(idx)) total += skew_normal_logpdf(theta[idx], sn);
    }
    // Gamma(1, kGammaScale) on sigma2 and tau2, each with its log Jacobian.
    total += -std::log(kGammaScale) - std::exp(log_sigma2) / kGammaScale + log_sigma2;
    total += -std::log(kGammaScale) - std::exp(log_tau2) / kGammaScale + log_tau2;
    return total;
  }

  void add_prior_grad(const Eigen::VectorXd& theta, double log_sigma2, double tau2,
                      Eigen::VectorXd& grad) const {
    const double sigma = std::exp(0.5 * log_sigma2);
    const double sigma2 = sigma * sigma;
    const SkewNormalParams sn{0.0, 1.0 / sigma, spec_.alpha};
    double dsigma_total = 0.0;
    for (int idx = 0; idx < n_network_; ++idx) {
      if (!has_sn_prior(idx)) continue;
      const double w = theta[idx];
      grad[idx] += skew_normal_dlogpdf_dx(w, sn);
      // d/dsigma log[2 sigma phi(sigma w) Phi(alpha sigma w)]
      dsigma_total += 1.0 / sigma - sigma * w * w +
                      spec_.alpha * w * norm_mills(spec_.alpha * sigma * w);
    }
    grad[n_network_] += dsigma_total * 0.5 * sigma;     // chain to log sigma2
    grad[n_network_] += -sigma2 / kGammaScale + 1.0;    // Gamma prior + Jacobian
    grad[n_network_ + 1] += -tau2 / kGammaScale + 1.0;
  }

  DfnnSpec spec_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  size_t hidden_ = 0;
  std::vector<int> w_offset_;
  std::vector<int> bias_offset_;
  int out_offset_ = 0;
  int n_network_ = 0;
};

}  // namespace

std::unique_ptr<RegressionModel> make_dfnn_target(DfnnSpec spec, Eigen::MatrixXd x,
                                                  Eigen::VectorXd y) {
  return std::make_unique<DfnnTarget>(std::move(spec), std::move(x), std::move(y));
}

}  // namespace cmgva
