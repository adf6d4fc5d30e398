#include "cmgva/natural_gradient.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmgva {

NaturalGradient natural_gradient_beta_d(const Eigen::VectorXd& beta,
                                        const Eigen::VectorXd& d,
                                        const Eigen::VectorXd& g_beta,
                                        const Eigen::VectorXd& g_d,
                                        const NaturalGradientOptions& opt) {
  const Eigen::Index m = beta.size();
  if (d.size() != m || g_beta.size() != m || g_d.size() != m) {
    throw std::invalid_argument("natural_gradient_beta_d: size mismatch");
  }
  const Eigen::VectorXd de = clamped_d(d);
  const Eigen::VectorXd d2 = de.cwiseProduct(de);
  const Eigen::VectorXd b2 = beta.cwiseProduct(beta);

  NaturalGradient out;
  const double kappa1 = (b2.cwiseQuotient(d2)).sum();
  if (kappa1 == 0.0) {
    out.beta = d2.cwiseProduct(g_beta);
  } else {
    const double coef = (1.0 + kappa1) / (2.0 * kappa1);
    out.beta = coef * (g_beta.dot(beta) * beta + d2.cwiseProduct(g_beta));
  }

  if (opt.d_curvature == DCurvature::kExact) {
    // Sherman-Morrison solve against the exact rank-one Fisher block
    // Diag(a) + u u^T; the full matrix is positive definite even where
    // individual a_i are negative.
    const double c = 1.0 / (1.0 + kappa1);
    Eigen::VectorXd a(m), u(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      a[i] = 2.0 * (1.0 - 2.0 * c * b2[i] / d2[i]) / d2[i];
      if (a[i] == 0.0) a[i] = 1e-12;
      u[i] = std::sqrt(2.0) * c * b2[i] / (d2[i] * de[i]);
    }
    const Eigen::VectorXd u_over_a = u.cwiseQuotient(a);
    double denom = 1.0 + u.dot(u_over_a);
    if (denom == 0.0) denom = 1e-12;
    out.d = g_d.cwiseQuotient(a) - (u_over_a.dot(g_d) / denom) * u_over_a;
    return out;
  }

  Eigen::VectorXd v1(m), v2(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double lead = opt.d_curvature == DCurvature::kVariance ? d2[i] : 1.0 / d2[i];
    v1[i] = lead - 2.0 * b2[i] / (d2[i] * d2[i]);
    if (v1[i] == 0.0) v1[i] = 1e-12;
    v2[i] = b2[i] / (d2[i] * de[i]);
  }
  const Eigen::VectorXd v2_over_v1 = v2.cwiseQuotient(v1);
  const double kappa2 = 0.5 / (1.0 + v2.cwiseProduct(v2_over_v1).sum());
  out.d = 0.5 * g_d.cwiseQuotient(v1) + kappa2 * v2_over_v1.dot(g_d) * v2_over_v1;
  return out;
}

double update_pi(double pi_new, const Eigen::VectorXd& log_ratio,
                 const std::vector<Responsibilities>& resp, double a, bool center) {
  if (!(pi_new > 0.0 && pi_new < 1.0)) {
    throw std::domain_error("update_pi: pi_new outside (0, 1)");
  }
  const Eigen::Index n = log_ratio.size();
  if (static_cast<Eigen::Index>(resp.size()) != n || n == 0) {
    throw std::invalid_argument("update_pi: sample count mismatch");
  }
  const double fbar = center ? log_ratio.mean() : 0.0;
  double step = 0.0;
  for (Eigen::Index s = 0; s < n; ++s) {
    const Responsibilities& r = resp[static_cast<size_t>(s)];
    step += (r.delta1 - r.delta2) * (log_ratio[s] - fbar);
  }
  step /= static_cast<double>(n);
  double rho = std::log((1.0 - pi_new) / pi_new);
  rho += a * step;
  // 1 / (1 + e^rho) saturates to exactly 0 or 1 in double precision once
  // |rho| is large; clamping keeps the weight strictly inside (0, 1).
  rho = std::min(std::max(rho, -36.0), 36.0);
  return 1.0 / (1.0 + std::exp(rho));
}

Eigen::VectorXd update_mu(const Eigen::VectorXd& mu, const Component& cand,
                          const Eigen::VectorXd& delta2,
                          const Eigen::MatrixXd& grad_diffs, double a) {
  const Eigen::Index n = grad_diffs.rows(), m = mu.size();
  if (delta2.size() != n || grad_diffs.cols() != m) {
    throw std::invalid_argument("update_mu: size mismatch");
  }
  const Eigen::VectorXd de = clamped_d(cand.d);
  const Eigen::VectorXd d2 = de.cwiseProduct(de);
  Eigen::VectorXd accum = Eigen::VectorXd::Zero(m);
  for (Eigen::Index s = 0; s < n; ++s) {
    const Eigen::VectorXd g = grad_diffs.row(s);
    // (beta beta^T + D^2) g without forming the covariance.
    accum.noalias() += delta2[s] * (cand.beta * (cand.beta.transpose() * g));
    accum.noalias() += delta2[s] * d2.cwiseProduct(g);
  }
  return mu + (a / static_cast<double>(n)) * accum;
}

}  // namespace cmgva
