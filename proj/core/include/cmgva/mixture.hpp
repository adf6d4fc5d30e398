#pragma once

#include <vector>

#include <Eigen/Core>

#include "cmgva/factor_gaussian.hpp"
#include "cmgva/rng.hpp"
#include "cmgva/yeo_johnson.hpp"

namespace cmgva {

// The full variational approximation: a K-component factor-Gaussian mixture
// in transformed space, composed with a per-coordinate monotone transform.
// If phi = t(theta) coordinate-wise, the density of theta is
//   q(theta) = [ sum_k w_k N(phi; mu_k, Sigma_k) ] * prod_i dt_i/dtheta_i.
// K = 1 with a learned transform is the Gaussian-copula special case; pinning
// every transform parameter at 1 gives a plain mixture of normals.
struct CmgvaState {
  YjVector yj;
  std::vector<Component> components;
  Eigen::VectorXd weights;
  // Components with index below this were fitted in earlier rounds and must
  // never change again (their stored bits are compared in tests).
  int frozen_through = 0;

  Eigen::Index dim() const { return yj.dim(); }
  int component_count() const { return static_cast<int>(components.size()); }
};

// Throws std::invalid_argument unless the weights are a simplex within 1e-12,
// all components share the transform's dimension, and the loading matrices
// are lower trapezoid.
void validate_state(const CmgvaState& state);

struct MixtureSample {
  Eigen::VectorXd theta;
  Eigen::VectorXd phi;
  int comp = 0;
};

// A trial component mixed into an existing approximation at weight pi_new:
//   q_phi(phi) = (1 - pi_new) * q_base(phi) + pi_new * N(phi; cand).
// The base state is untouched; flatten() materialises the K+1 state.
struct BoostedMixture {
  const CmgvaState* base = nullptr;
  const Component* cand = nullptr;
  double pi_new = 0.0;
};

CmgvaState flatten(const BoostedMixture& boosted);

// Density and gradient work shared by the state and its boosted view. Holds
// one FactorGaussian per component; rebuild after any parameter change.
class MixtureEvaluator {
 public:
  explicit MixtureEvaluator(const CmgvaState& state);
  MixtureEvaluator(const CmgvaState& base, const Component& cand, double pi_new);

  int count() const { return static_cast<int>(fgs_.size()); }
  const FactorGaussian& fg(int k) const { return fgs_[static_cast<size_t>(k)]; }
  const Eigen::VectorXd& log_weights() const { return log_w_; }
  const YjVector& yj() const { return *yj_; }
  Eigen::Index dim() const { return yj_->dim(); }

  // log sum_k w_k N_k(phi); optionally exposes the per-component log
  // densities (without weights) for responsibility computations.
  double log_density_phi(const Eigen::VectorXd& phi,
                         Eigen::VectorXd* log_comp = nullptr) const;
  // d/dphi of the above.
  Eigen::VectorXd grad_log_density_phi(const Eigen::VectorXd& phi) const;

  // Density of theta itself, transform Jacobian included.
  double log_density_theta(const Eigen::VectorXd& theta) const;
  // d/dtheta log q(theta), chaining the phi-space gradient through the
  // transform derivative and adding the Jacobian's own theta-sensitivity.
  Eigen::VectorXd grad_log_density_theta(const Eigen::VectorXd& theta) const;

  MixtureSample sample(Rng& rng) const;

 private:
  const YjVector* yj_;
  std::vector<FactorGaussian> fgs_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd log_w_;
};

// Convenience wrappers over a freshly built evaluator.
double log_density(const Eigen::VectorXd& theta, const CmgvaState& state);
double log_density_phi(const Eigen::VectorXd& phi, const CmgvaState& state);
std::vector<MixtureSample> sample(const CmgvaState& state, int n_samples, Rng& rng);

// Log of the i-th marginal density of theta_i: a univariate normal mixture in
// phi_i with variances (beta_k beta_k^T + D_k^2)_{ii}, times the transform
// Jacobian. Exact by construction, no integration involved.
double marginal_log_density(Eigen::Index i, double theta_i, const CmgvaState& state);

// Share of the boosted mixture density at phi carried by the old mixture
// (delta1) and the trial component (delta2), with
//   dtot = (1 - pi) q_base(phi) + pi N_cand(phi),
//   delta1 = q_base / dtot,  delta2 = N_cand / dtot,
// so (1 - pi) delta1 + pi delta2 = 1. per_component[k] = w_k N_k / dtot sums
// to delta1. When N_cand / dtot underflows below 1e-300, delta2 is taken as 0
// and delta1 as exactly 1 / (1 - pi).
struct Responsibilities {
  double delta1 = 0.0;
  double delta2 = 0.0;
  Eigen::VectorXd per_component;
};

Responsibilities responsibilities(const Eigen::VectorXd& phi, const CmgvaState& state,
                                  const Component& cand, double pi_new);
// Same computation reusing cached factorisations: evaluator must be the
// boosted view (base + cand), whose last entry is the trial component.
Responsibilities responsibilities(const Eigen::VectorXd& phi,
                                  const MixtureEvaluator& boosted_eval,
                                  double pi_new);

}  // namespace cmgva
