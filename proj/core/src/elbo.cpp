#include "cmgva/elbo.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <thread>

namespace cmgva {

double elbo_estimate(const TargetModel& target, const CmgvaState& state,
                     int n_samples, Rng& rng) {
  if (n_samples < 1) throw std::invalid_argument("elbo_estimate: n_samples < 1");
  MixtureEvaluator eval(state);
  double total = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const MixtureSample draw = eval.sample(rng);
    const double log_q = eval.log_density_phi(draw.phi) + state.yj.log_jacobian(draw.theta);
    total += target.log_density(draw.theta) - log_q;
  }
  return total / n_samples;
}

GradientEstimate score_grads_beta_d(const Eigen::VectorXd& phi,
                                    const MixtureEvaluator& boosted_eval,
                                    double pi_new) {
  const FactorGaussian& fg = boosted_eval.fg(boosted_eval.count() - 1);
  const Eigen::Index m = fg.dim(), r = fg.rank();
  GradientEstimate out;
  if (pi_new == 0.0) {
    out.grad_beta = Eigen::VectorXd::Zero(vech_size(m, r));
    out.grad_d = Eigen::VectorXd::Zero(m);
    return out;
  }
  const Responsibilities resp = responsibilities(phi, boosted_eval, pi_new);
  const double weight = pi_new * resp.delta2;
  const Eigen::VectorXd s = fg.solve(phi - fg.mu());
  out.grad_beta = weight * vech(score_beta(fg, s));
  out.grad_d = weight * score_d(fg, s);
  return out;
}

GradientEstimate score_grads_beta_d(const Eigen::VectorXd& phi, const CmgvaState& state,
                                    const Component& cand, double pi_new) {
  MixtureEvaluator eval(state, cand, pi_new);
  return score_grads_beta_d(phi, eval, pi_new);
}

Eigen::VectorXd grad_logq_theta(const Eigen::VectorXd& theta, const CmgvaState& state) {
  return MixtureEvaluator(state).grad_log_density_theta(theta);
}

Eigen::VectorXd cv_coeffs(const Eigen::VectorXd& f, const Eigen::MatrixXd& scores) {
  const Eigen::Index n = scores.rows(), p = scores.cols();
  if (f.size() != n) throw std::invalid_argument("cv_coeffs: size mismatch");
  if (n < 2) throw std::invalid_argument("cv_coeffs: need at least two samples");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::VectorXd g = scores.col(i);
    const double g_mean = g.mean();
    const Eigen::VectorXd fg = f.cwiseProduct(g);
    const double fg_mean = fg.mean();
    // cov(f g, g) / var(g) with matching normalisations; the guard keeps
    // degenerate coordinates (constant scores) at zero.
    double cov = 0.0, var = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
      cov += (fg[s] - fg_mean) * (g[s] - g_mean);
      var += (g[s] - g_mean) * (g[s] - g_mean);
    }
    c[i] = var < 1e-30 ? 0.0 : cov / var;
  }
  return c;
}

Eigen::VectorXd cv_estimate(const Eigen::VectorXd& f, const Eigen::MatrixXd& scores,
                            const Eigen::VectorXd& coeffs) {
  const Eigen::Index n = scores.rows(), p = scores.cols();
  Eigen::VectorXd g(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double c = coeffs.size() == 0 ? 0.0 : coeffs[i];
    g[i] = (f.array() - c).matrix().dot(scores.col(i)) / n;
  }
  return g;
}

ControlVariates control_variate_coeffs(const GradientBatch& batch) {
  ControlVariates cv;
  cv.c_beta = cv_coeffs(batch.log_ratio, batch.score_beta);
  cv.c_d = cv_coeffs(batch.log_ratio, batch.score_d);
  return cv;
}

CvGradientResult cv_gradient_estimate(const TargetModel& target, const CmgvaState& state,
                                      const Component& cand, double pi_new,
                                      const ControlVariates& cv, int n_samples, Rng& rng,
                                      int threads) {
  if (n_samples < 2) throw std::invalid_argument("cv_gradient_estimate: need S >= 2");
  const Eigen::Index m = cand.dim(), r = cand.rank();
  const Eigen::Index nb = vech_size(m, r);
  MixtureEvaluator eval(state, cand, pi_new);

  CvGradientResult out;
  GradientBatch& batch = out.batch;
  batch.theta.resize(n_samples, m);
  batch.phi.resize(n_samples, m);
  batch.comp.resize(static_cast<size_t>(n_samples));
  batch.log_ratio.resize(n_samples);
  batch.score_beta.resize(n_samples, nb);
  batch.score_d.resize(n_samples, m);

  std::vector<Eigen::VectorXd> thetas(static_cast<size_t>(n_samples));
  Eigen::VectorXd log_q(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    const MixtureSample draw = eval.sample(rng);
    batch.theta.row(s) = draw.theta;
    batch.phi.row(s) = draw.phi;
    batch.comp[static_cast<size_t>(s)] = draw.comp;
    thetas[static_cast<size_t>(s)] = draw.theta;
    log_q[s] = eval.log_density_phi(draw.phi) + state.yj.log_jacobian(draw.theta);
    const GradientEstimate sc = score_grads_beta_d(draw.phi, eval, pi_new);
    batch.score_beta.row(s) = sc.grad_beta;
    batch.score_d.row(s) = sc.grad_d;
  }
  Eigen::VectorXd log_g(n_samples);
  eval_target_batch(target, thetas, threads, log_g);
  batch.log_ratio = log_g - log_q;

  out.grad_beta = cv_estimate(batch.log_ratio, batch.score_beta, cv.c_beta);
  out.grad_d = cv_estimate(batch.log_ratio, batch.score_d, cv.c_d);
  return out;
}

void eval_target_batch(const TargetModel& target, const std::vector<Eigen::VectorXd>& thetas,
                       int threads, Eigen::VectorXd& log_g,
                       std::vector<Eigen::VectorXd>* grads) {
  const int n = static_cast<int>(thetas.size());
  log_g.resize(n);
  if (grads != nullptr) grads->resize(static_cast<size_t>(n));
  const auto eval_range = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      log_g[i] = target.log_density(thetas[static_cast<size_t>(i)]);
      if (grads != nullptr) {
        (*grads)[static_cast<size_t>(i)] =
            target.grad_log_density(thetas[static_cast<size_t>(i)]);
      }
    }
  };
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    eval_range(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk, hi = std::min(n, lo + chunk);
    pool.emplace_back([&, lo, hi, w] {
      try {
        eval_range(lo, hi);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int resolve_thread_count(int configured) {
  if (const char* env = std::getenv("CMGVA_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return configured >= 1 ? configured : 1;
}

}  // namespace cmgva
