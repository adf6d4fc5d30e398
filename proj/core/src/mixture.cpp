#include "cmgva/mixture.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cmgva/special_functions.hpp"

namespace cmgva {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void validate_state(const CmgvaState& state) {
  const Eigen::Index m = state.yj.dim();
  if (state.weights.size() != state.component_count()) {
    throw std::invalid_argument("state: weight count != component count");
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < state.weights.size(); ++k) {
    if (!(state.weights[k] >= 0.0)) {
      throw std::invalid_argument("state: negative mixture weight");
    }
    total += state.weights[k];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("state: weights do not sum to one");
  }
  for (const Component& c : state.components) {
    if (c.dim() != m || c.beta.rows() != m || c.d.size() != m) {
      throw std::invalid_argument("state: component dimension mismatch");
    }
    if (!c.is_lower_trapezoid()) {
      throw std::invalid_argument("state: loading matrix not lower trapezoid");
    }
  }
  if (state.frozen_through < 0 || state.frozen_through > state.component_count()) {
    throw std::invalid_argument("state: frozen_through out of range");
  }
}

CmgvaState flatten(const BoostedMixture& boosted) {
  CmgvaState out = *boosted.base;
  const double pi = boosted.pi_new;
  out.weights = (out.weights * (1.0 - pi)).eval();
  out.weights.conservativeResize(out.weights.size() + 1);
  out.weights[out.weights.size() - 1] = pi;
  out.components.push_back(*boosted.cand);
  return out;
}

MixtureEvaluator::MixtureEvaluator(const CmgvaState& state) : yj_(&state.yj) {
  fgs_.reserve(state.components.size());
  for (const Component& c : state.components) fgs_.emplace_back(c);
  weights_ = state.weights;
  log_w_.resize(weights_.size());
  for (Eigen::Index k = 0; k < weights_.size(); ++k) {
    log_w_[k] = weights_[k] > 0.0 ? std::log(weights_[k]) : kNegInf;
  }
}

MixtureEvaluator::MixtureEvaluator(const CmgvaState& base, const Component& cand,
                                   double pi_new)
    : yj_(&base.yj) {
  fgs_.reserve(base.components.size() + 1);
  for (const Component& c : base.components) fgs_.emplace_back(c);
  fgs_.emplace_back(cand);
  const Eigen::Index k_old = base.weights.size();
  weights_.resize(k_old + 1);
  weights_.head(k_old) = base.weights * (1.0 - pi_new);
  weights_[k_old] = pi_new;
  log_w_.resize(k_old + 1);
  for (Eigen::Index k = 0; k <= k_old; ++k) {
    log_w_[k] = weights_[k] > 0.0 ? std::log(weights_[k]) : kNegInf;
  }
}

double MixtureEvaluator::log_density_phi(const Eigen::VectorXd& phi,
                                         Eigen::VectorXd* log_comp) const {
  const int k_count = count();
  Eigen::VectorXd terms(k_count);
  Eigen::VectorXd comps(k_count);
  for (int k = 0; k < k_count; ++k) {
    comps[k] = fgs_[static_cast<size_t>(k)].log_density(phi);
    terms[k] = log_w_[k] + comps[k];
  }
  if (log_comp != nullptr) *log_comp = comps;
  return log_sum_exp(terms);
}

Eigen::VectorXd MixtureEvaluator::grad_log_density_phi(const Eigen::VectorXd& phi) const {
  Eigen::VectorXd log_comp;
  const double log_mix = log_density_phi(phi, &log_comp);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(phi.size());
  for (int k = 0; k < count(); ++k) {
    if (!std::isfinite(log_w_[k])) continue;
    const double resp = std::exp(log_w_[k] + log_comp[k] - log_mix);
    if (resp == 0.0) continue;
    grad.noalias() += resp * fgs_[static_cast<size_t>(k)].grad_log_density(phi);
  }
  return grad;
}

double MixtureEvaluator::log_density_theta(const Eigen::VectorXd& theta) const {
  return log_density_phi(yj_->forward(theta)) + yj_->log_jacobian(theta);
}

Eigen::VectorXd MixtureEvaluator::grad_log_density_theta(const Eigen::VectorXd& theta) const {
  const Eigen::Index m = theta.size();
  Eigen::VectorXd phi(m), deriv(m), jac_term(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double g = yj_->gamma(i);
    phi[i] = yj_forward(theta[i], g);
    const YjJacobian j = yj_log_jacobian(theta[i], g);
    deriv[i] = j.deriv;
    jac_term[i] = j.dlog_dtheta;
  }
  return grad_log_density_phi(phi).cwiseProduct(deriv) + jac_term;
}

MixtureSample MixtureEvaluator::sample(Rng& rng) const {
  MixtureSample s;
  s.comp = rng.categorical(weights_);
  const FactorGaussian& fg = fgs_[static_cast<size_t>(s.comp)];
  const Eigen::VectorXd z = rng.normal_vector(fg.rank());
  const Eigen::VectorXd eta = rng.normal_vector(fg.dim());
  s.phi = fg.mu() + fg.beta() * z + fg.d_eff().cwiseProduct(eta);
  s.theta = yj_->inverse(s.phi);
  return s;
}

double log_density(const Eigen::VectorXd& theta, const CmgvaState& state) {
  return MixtureEvaluator(state).log_density_theta(theta);
}

double log_density_phi(const Eigen::VectorXd& phi, const CmgvaState& state) {
  return MixtureEvaluator(state).log_density_phi(phi);
}

std::vector<MixtureSample> sample(const CmgvaState& state, int n_samples, Rng& rng) {
  MixtureEvaluator eval(state);
  std::vector<MixtureSample> draws;
  draws.reserve(static_cast<size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) draws.push_back(eval.sample(rng));
  return draws;
}

double marginal_log_density(Eigen::Index i, double theta_i, const CmgvaState& state) {
  const double gamma = state.yj.gamma(i);
  const double phi_i = yj_forward(theta_i, gamma);
  Eigen::VectorXd terms(state.component_count());
  for (int k = 0; k < state.component_count(); ++k) {
    const Component& c = state.components[static_cast<size_t>(k)];
    const Eigen::VectorXd de = clamped_d(c.d);
    const double var = c.beta.row(i).squaredNorm() + de[i] * de[i];
    const double z = phi_i - c.mu[i];
    const double log_n = -0.5 * (kLogTwoPi + std::log(var) + z * z / var);
    terms[k] = (state.weights[k] > 0.0 ? std::log(state.weights[k]) : kNegInf) + log_n;
  }
  return log_sum_exp(terms) + yj_log_deriv(theta_i, gamma);
}

Responsibilities responsibilities(const Eigen::VectorXd& phi,
                                  const MixtureEvaluator& boosted_eval,
                                  double pi_new) {
  const int k_total = boosted_eval.count();
  const int k_old = k_total - 1;
  Eigen::VectorXd log_comp;
  const double log_dtot = boosted_eval.log_density_phi(phi, &log_comp);

  Responsibilities out;
  out.per_component.resize(k_old);
  // log of the old mixture density recovers the unscaled weights by removing
  // the (1 - pi) factor baked into the boosted view.
  Eigen::VectorXd old_terms(k_old);
  for (int k = 0; k < k_old; ++k) {
    old_terms[k] = boosted_eval.log_weights()[k] + log_comp[k] - std::log1p(-pi_new);
  }
  const double log_old = log_sum_exp(old_terms);
  const double log_delta2 = log_comp[k_old] - log_dtot;
  if (log_delta2 < std::log(1e-300)) {
    out.delta2 = 0.0;
    out.delta1 = 1.0 / (1.0 - pi_new);
  } else {
    out.delta2 = std::exp(log_delta2);
    out.delta1 = std::exp(log_old - log_dtot);
  }
  for (int k = 0; k < k_old; ++k) {
    out.per_component[k] = std::exp(old_terms[k] - log_dtot);
  }
  return out;
}

Responsibilities responsibilities(const Eigen::VectorXd& phi, const CmgvaState& state,
                                  const Component& cand, double pi_new) {
  if (!(pi_new >= 0.0 && pi_new < 1.0)) {
    throw std::domain_error("responsibilities: pi_new outside [0, 1)");
  }
  MixtureEvaluator eval(state, cand, pi_new);
  return responsibilities(phi, eval, pi_new);
}

}  // namespace cmgva
