#include "cmgva/booster.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cmgva/adam.hpp"
#include "cmgva/factor_gaussian.hpp"
#include "cmgva/serialization.hpp"
#include "cmgva/yeo_johnson.hpp"

namespace cmgva {

namespace {

// gamma = 2 sigmoid(psi) saturates to exactly 0 or 2 in floating point once
// |psi| is large; clamping psi keeps gamma strictly inside the open interval.
constexpr double kPsiClamp = 30.0;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd random_loadings(Eigen::Index n, double sd, Rng& rng) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = sd * rng.normal();
  return v;
}

void report_divergence(const CmgvaState& last_good, int iteration, int k) {
  std::cerr << "cmgva: non-finite value at iteration " << iteration
            << " with " << k << " component(s); reverting to the last"
            << " checkpoint and halting this round. Last good state:\n"
            << state_to_json(last_good) << "\n";
}

NewMeanMode resolve_mode(NewMeanMode mode, Eigen::Index m) {
  if (mode != NewMeanMode::kAuto) return mode;
  return m <= 20 ? NewMeanMode::kGrid : NewMeanMode::kImportance;
}

// Argmax of the log weights, or a draw with probability proportional to the
// (exponentiated, shift-normalised) weights. Returns -1 if none is finite.
int pick_candidate(const Eigen::VectorXd& log_w, bool proportional, Rng& rng) {
  double best = kNegInf;
  int best_idx = -1;
  for (Eigen::Index j = 0; j < log_w.size(); ++j) {
    if (std::isfinite(log_w[j]) && log_w[j] > best) {
      best = log_w[j];
      best_idx = static_cast<int>(j);
    }
  }
  if (best_idx < 0 || !proportional) return best_idx;
  Eigen::VectorXd w(log_w.size());
  for (Eigen::Index j = 0; j < log_w.size(); ++j) {
    w[j] = std::isfinite(log_w[j]) ? std::exp(log_w[j] - best) : 0.0;
  }
  return rng.categorical(w);
}

struct Patience {
  int limit = 0;
  int since_best = 0;
  double best = kNegInf;

  // True when the moving average has failed to improve `limit` times in a row.
  bool expired(double moving_avg) {
    if (limit <= 0) return false;
    if (moving_avg > best) {
      best = moving_avg;
      since_best = 0;
    } else {
      ++since_best;
    }
    return since_best >= limit;
  }
};

}  // namespace

void validate_config(const BoostConfig& cfg) {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("boost config: ") + what); };
  if (cfg.sample_count < 1) fail("sample_count must be at least 1");
  if (cfg.iters_first < 0) fail("iters_first must be nonnegative");
  if (cfg.iters_per_component < 0) fail("iters_per_component must be nonnegative");
  if (cfg.max_components < 1) fail("max_components must be at least 1");
  if (cfg.r_first < 1) fail("r_first must be at least 1");
  if (cfg.r_added < 1) fail("r_added must be at least 1");
  if (!(cfg.alpha_mu > 0.0)) fail("alpha_mu must be positive");
  if (!(cfg.alpha_beta > 0.0)) fail("alpha_beta must be positive");
  if (!(cfg.alpha_d > 0.0)) fail("alpha_d must be positive");
  if (!(cfg.alpha_pi > 0.0)) fail("alpha_pi must be positive");
  if (!(cfg.alpha_gamma > 0.0)) fail("alpha_gamma must be positive");
  if (cfg.elbo_window < 1) fail("elbo_window must be at least 1");
  if (cfg.patience < 0) fail("patience must be nonnegative");
  if (cfg.checkpoint_every < 1) fail("checkpoint_every must be at least 1");
  if (!(cfg.init_beta_sd >= 0.0)) fail("init_beta_sd must be nonnegative");
  if (!(cfg.init_d > 0.0)) fail("init_d must be positive");
  if (!(cfg.init_pi > 0.0 && cfg.init_pi < 1.0)) fail("init_pi must lie in (0, 1)");
  if (!(cfg.first_init_d > 0.0)) fail("first_init_d must be positive");
  if (!(cfg.gamma_init > 0.0 && cfg.gamma_init < 2.0)) fail("gamma_init must lie in (0, 2)");
  if (cfg.threads < 0) fail("threads must be nonnegative");
}

void ElboTrace::append(double value, int k) {
  elbo.push_back(value);
  k_index.push_back(k);
  const std::size_t w = static_cast<std::size_t>(std::max(window, 1));
  const std::size_t n = elbo.size();
  const std::size_t lo = n > w ? n - w : 0;
  double total = 0.0;
  for (std::size_t i = lo; i < n; ++i) total += elbo[i];
  moving_avg.push_back(total / static_cast<double>(n - lo));
}

double ElboTrace::window_average(int last_n) const {
  if (elbo.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t take =
      std::min(elbo.size(), static_cast<std::size_t>(std::max(last_n, 1)));
  double total = 0.0;
  for (std::size_t i = elbo.size() - take; i < elbo.size(); ++i) total += elbo[i];
  return total / static_cast<double>(take);
}

CmgvaState fit_first_component(const TargetModel& target, const BoostConfig& cfg,
                               Rng& rng, ElboTrace* trace, bool* diverged) {
  validate_config(cfg);
  if (diverged != nullptr) *diverged = false;
  const Eigen::Index m = target.dim();
  const Eigen::Index r = std::min<Eigen::Index>(cfg.r_first, m);
  const Eigen::Index nb = vech_size(m, r);
  const int S = cfg.sample_count;
  const int threads = resolve_thread_count(cfg.threads);

  CmgvaState state{YjVector(Eigen::VectorXd::Constant(m, cfg.gamma_init)),
                   {Component{Eigen::VectorXd::Zero(m),
                              unvech(random_loadings(nb, cfg.init_beta_sd, rng), m, r),
                              Eigen::VectorXd::Constant(m, cfg.first_init_d)}},
                   Eigen::VectorXd::Ones(1),
                   0};

  ElboTrace local_trace;
  ElboTrace& tr = trace != nullptr ? *trace : local_trace;
  tr.window = cfg.elbo_window;

  Eigen::VectorXd psi = Eigen::VectorXd::Constant(m, psi_from_gamma(cfg.gamma_init));

  AdamState adam_mu = AdamState::init(m, cfg.alpha_mu);
  AdamState adam_beta = AdamState::init(nb, cfg.alpha_beta);
  AdamState adam_d = AdamState::init(m, cfg.alpha_d);
  AdamState adam_psi = AdamState::init(m, cfg.alpha_gamma);

  Eigen::VectorXd c_mu, c_beta, c_d, c_psi;

  CmgvaState checkpoint = state;
  Patience patience{cfg.patience};

  std::vector<Eigen::VectorXd> thetas(static_cast<std::size_t>(S));
  Eigen::VectorXd log_g(S), f(S);
  Eigen::MatrixXd sc_mu(S, m), sc_beta(S, nb), sc_d(S, m), sc_psi(S, m);

  const auto draw_batch = [&] {
    const MixtureEvaluator eval(state);
    const FactorGaussian& fg = eval.fg(0);
    const Eigen::VectorXd& gamma = state.yj.gamma();
    for (int s = 0; s < S; ++s) {
      const MixtureSample samp = eval.sample(rng);
      thetas[static_cast<std::size_t>(s)] = samp.theta;
      const Eigen::VectorXd sv = fg.solve(samp.phi - fg.mu());
      f[s] = -(fg.log_density(samp.phi) + state.yj.log_jacobian(samp.theta));
      sc_mu.row(s) = sv.transpose();
      sc_beta.row(s) = vech(score_beta(fg, sv)).transpose();
      sc_d.row(s) = score_d(fg, sv).transpose();
      if (cfg.learn_gamma) {
        for (Eigen::Index i = 0; i < m; ++i) {
          sc_psi(s, i) = (-sv[i] * yj_dforward_dgamma(samp.theta[i], gamma[i]) +
                          yj_dlogderiv_dgamma(samp.theta[i], gamma[i])) *
                         dgamma_dpsi(gamma[i]);
        }
      }
    }
    eval_target_batch(target, thetas, threads, log_g);
    f += log_g;  // f_s = log g(theta_s) - log q(theta_s)
  };

  // Warm-start the control variates from one batch at the initial parameters;
  // without it the first gradients carry the raw log-ratio scale, and that
  // noise lingers in the ADAM second moments.
  if (cfg.iters_first >= 1) {
    draw_batch();
    c_mu = cv_coeffs(f, sc_mu);
    c_beta = cv_coeffs(f, sc_beta);
    c_d = cv_coeffs(f, sc_d);
    if (cfg.learn_gamma) c_psi = cv_coeffs(f, sc_psi);
  }

  for (int it = 1; it <= cfg.iters_first; ++it) {
    draw_batch();

    const Eigen::VectorXd mu_next =
        state.components[0].mu + adam_step(adam_mu, cv_estimate(f, sc_mu, c_mu));
    const Eigen::VectorXd vb_next =
        vech(state.components[0].beta) + adam_step(adam_beta, cv_estimate(f, sc_beta, c_beta));
    const Eigen::VectorXd d_next =
        state.components[0].d + adam_step(adam_d, cv_estimate(f, sc_d, c_d));
    Eigen::VectorXd psi_next = psi;
    if (cfg.learn_gamma) {
      psi_next += adam_step(adam_psi, cv_estimate(f, sc_psi, c_psi));
      psi_next = psi_next.cwiseMax(-kPsiClamp).cwiseMin(kPsiClamp);
    }

    const double elbo_it = f.mean();
    tr.append(elbo_it, 1);

    if (!std::isfinite(elbo_it) || !mu_next.allFinite() || !vb_next.allFinite() ||
        !d_next.allFinite() || !psi_next.allFinite()) {
      report_divergence(checkpoint, it, 1);
      state = checkpoint;
      if (diverged != nullptr) *diverged = true;
      break;
    }

    state.components[0].mu = mu_next;
    state.components[0].beta = unvech(vb_next, m, r);
    state.components[0].d = d_next;
    if (cfg.learn_gamma) {
      psi = psi_next;
      for (Eigen::Index i = 0; i < m; ++i) state.yj.set_gamma(i, gamma_from_psi(psi[i]));
    }

    c_mu = cv_coeffs(f, sc_mu);
    c_beta = cv_coeffs(f, sc_beta);
    c_d = cv_coeffs(f, sc_d);
    if (cfg.learn_gamma) c_psi = cv_coeffs(f, sc_psi);

    if (it % cfg.checkpoint_every == 0) checkpoint = state;
    if (patience.expired(tr.moving_avg.back())) break;
  }

  state.frozen_through = 1;
  return state;
}

Eigen::VectorXd init_new_mean(const TargetModel& target, const CmgvaState& state,
                              int n_samples, NewMeanMode mode, Rng& rng,
                              bool proportional) {
  if (state.component_count() < 1) {
    throw std::invalid_argument("init_new_mean: state has no components");
  }
  if (n_samples < 1) throw std::invalid_argument("init_new_mean: n_samples must be at least 1");
  const Eigen::Index m = state.dim();
  const MixtureEvaluator eval(state);

  auto log_weight = [&](const Eigen::VectorXd& theta) {
    return target.log_density(theta) - eval.log_density_theta(theta);
  };

  if (resolve_mode(mode, m) == NewMeanMode::kImportance) {
    std::vector<MixtureSample> draws(static_cast<std::size_t>(n_samples));
    Eigen::VectorXd log_w(n_samples);
    for (int s = 0; s < n_samples; ++s) {
      draws[static_cast<std::size_t>(s)] = eval.sample(rng);
      log_w[s] = log_weight(draws[static_cast<std::size_t>(s)].theta);
    }
    const int pick = pick_candidate(log_w, proportional, rng);
    if (pick >= 0) return draws[static_cast<std::size_t>(pick)].phi;
    return eval.sample(rng).phi;  // every candidate weight came back non-finite
  }

  // Grid mode: scan each coordinate over the span of fresh draws while the
  // others sit at the mixture mean in transformed space.
  Eigen::MatrixXd phi_draws(n_samples, m);
  for (int s = 0; s < n_samples; ++s) phi_draws.row(s) = eval.sample(rng).phi.transpose();

  Eigen::VectorXd phi_hat = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < state.component_count(); ++k) {
    phi_hat += state.weights[k] * state.components[static_cast<std::size_t>(k)].mu;
  }

  Eigen::VectorXd result = phi_hat;
  bool fallback_ready = false;
  Eigen::VectorXd fallback;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double lo = phi_draws.col(i).minCoeff();
    const double hi = phi_draws.col(i).maxCoeff();
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(n_samples, lo, hi);
    Eigen::VectorXd log_w(n_samples);
    Eigen::VectorXd phi_cand = phi_hat;
    for (int j = 0; j < n_samples; ++j) {
      phi_cand[i] = grid[j];
      log_w[j] = log_weight(state.yj.inverse(phi_cand));
    }
    const int pick = pick_candidate(log_w, proportional, rng);
    if (pick >= 0) {
      result[i] = grid[pick];
    } else {
      if (!fallback_ready) {
        fallback = eval.sample(rng).phi;
        fallback_ready = true;
      }
      result[i] = fallback[i];
    }
  }
  return result;
}

std::pair<CmgvaState, ElboTrace> add_component(const TargetModel& target,
                                               const CmgvaState& state,
                                               const BoostConfig& cfg, Rng& rng,
                                               bool* diverged) {
  validate_config(cfg);
  validate_state(state);
  if (diverged != nullptr) *diverged = false;
  const Eigen::Index m = state.dim();
  const Eigen::Index r = std::min<Eigen::Index>(cfg.r_added, m);
  const Eigen::Index nb = vech_size(m, r);
  const int S = cfg.sample_count;
  const int threads = resolve_thread_count(cfg.threads);

  Component cand{init_new_mean(target, state, S, cfg.init_mode, rng, cfg.init_proportional),
                 unvech(random_loadings(nb, cfg.init_beta_sd, rng), m, r),
                 Eigen::VectorXd::Constant(m, cfg.init_d)};
  double pi_new = cfg.init_pi;

  ElboTrace tr;
  tr.window = cfg.elbo_window;

  AdamState adam_beta = AdamState::init(nb, cfg.alpha_beta);
  AdamState adam_d = AdamState::init(m, cfg.alpha_d);
  AdamState adam_mu = AdamState::init(m, cfg.alpha_mu);
  AdamState adam_rho = AdamState::init(1, cfg.alpha_pi);
  ControlVariates cv{Eigen::VectorXd(), Eigen::VectorXd()};

  Component checkpoint_cand = cand;
  double checkpoint_pi = pi_new;
  double rho = std::log((1.0 - pi_new) / pi_new);
  Patience patience{cfg.patience};
  const int k_next = state.component_count() + 1;

  std::vector<Eigen::VectorXd> thetas(static_cast<std::size_t>(S));
  std::vector<Eigen::VectorXd> grad_g;
  Eigen::VectorXd log_g(S), f(S), delta2(S);
  Eigen::MatrixXd grad_diffs(S, m);
  std::vector<Responsibilities> resp(static_cast<std::size_t>(S));

  // Control-variate warm start from one batch at the initial parameters.
  if (cfg.iters_per_component >= 1) {
    const CvGradientResult warm =
        cv_gradient_estimate(target, state, cand, pi_new, cv, S, rng, threads);
    cv = control_variate_coeffs(warm.batch);
  }

  for (int it = 1; it <= cfg.iters_per_component; ++it) {
    // Loading and scale step from one batch, with coefficients lagged from
    // the previous one.
    CvGradientResult est = cv_gradient_estimate(target, state, cand, pi_new, cv, S, rng, threads);
    cv = control_variate_coeffs(est.batch);

    Eigen::VectorXd g_beta = std::move(est.grad_beta);
    Eigen::VectorXd g_d = std::move(est.grad_d);
    if (r == 1) {
      const NaturalGradient ng =
          natural_gradient_beta_d(cand.beta.col(0), cand.d, g_beta, g_d, cfg.natgrad);
      g_beta = ng.beta;
      g_d = ng.d;
    }
    const Eigen::VectorXd vb_next = vech(cand.beta) + adam_step(adam_beta, g_beta);
    const Eigen::VectorXd d_next = cand.d + adam_step(adam_d, g_d);

    const double elbo_it = est.batch.log_ratio.mean();
    tr.append(elbo_it, k_next);

    if (!std::isfinite(elbo_it) || !vb_next.allFinite() || !d_next.allFinite()) {
      report_divergence(flatten({&state, &checkpoint_cand, checkpoint_pi}), it, k_next);
      cand = checkpoint_cand;
      pi_new = checkpoint_pi;
      if (diverged != nullptr) *diverged = true;
      break;
    }
    cand.beta = unvech(vb_next, m, r);
    cand.d = d_next;

    // Weight and mean steps from a fresh batch drawn under the new loadings.
    const MixtureEvaluator beval(state, cand, pi_new);
    for (int s = 0; s < S; ++s) {
      const MixtureSample samp = beval.sample(rng);
      thetas[static_cast<std::size_t>(s)] = samp.theta;
      resp[static_cast<std::size_t>(s)] = responsibilities(samp.phi, beval, pi_new);
      delta2[s] = resp[static_cast<std::size_t>(s)].delta2;
      f[s] = -(beval.log_density_phi(samp.phi) + state.yj.log_jacobian(samp.theta));
      grad_diffs.row(s) = -beval.grad_log_density_theta(samp.theta).transpose();
    }
    eval_target_batch(target, thetas, threads, log_g, &grad_g);
    f += log_g;
    for (int s = 0; s < S; ++s) {
      grad_diffs.row(s) += grad_g[static_cast<std::size_t>(s)].transpose();
      // The mean update lives on the transformed scale, so convert the
      // log-ratio gradient from theta to phi coordinates (the Jacobian terms
      // of the two densities cancel in the difference).
      const Eigen::VectorXd& th = thetas[static_cast<std::size_t>(s)];
      for (Eigen::Index i = 0; i < m; ++i) {
        grad_diffs(s, i) /= yj_deriv(th[i], state.yj.gamma()[i]);
      }
    }

    // Natural gradients for the weight (logit space, Fisher pi (1 - pi)) and
    // the mean (covariance-preconditioned), each fed through its own ADAM
    // accumulator; the step sizes alpha_pi and alpha_mu are the ADAM rates.
    // Centering the log ratio is free of bias here because the responsibility
    // difference has mean zero at fixed parameters.
    const double fbar = f.mean();
    Eigen::VectorXd g_rho = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd g_mu = Eigen::VectorXd::Zero(m);
    const Eigen::VectorXd d2 = clamped_d(cand.d).array().square();
    for (int s = 0; s < S; ++s) {
      const Responsibilities& rs = resp[static_cast<std::size_t>(s)];
      g_rho[0] += (rs.delta1 - rs.delta2) * (f[s] - fbar);
      const Eigen::VectorXd gd = grad_diffs.row(s).transpose();
      g_mu += delta2[s] * (cand.beta * (cand.beta.transpose() * gd) + d2.cwiseProduct(gd));
    }
    g_rho /= static_cast<double>(S);
    g_mu /= static_cast<double>(S);

    const double rho_next =
        std::min(std::max(rho + adam_step(adam_rho, g_rho)[0], -36.0), 36.0);
    const double pi_next = 1.0 / (1.0 + std::exp(rho_next));
    const Eigen::VectorXd mu_next = cand.mu + adam_step(adam_mu, g_mu);
    if (!std::isfinite(pi_next) || !mu_next.allFinite()) {
      report_divergence(flatten({&state, &checkpoint_cand, checkpoint_pi}), it, k_next);
      cand = checkpoint_cand;
      pi_new = checkpoint_pi;
      if (diverged != nullptr) *diverged = true;
      break;
    }
    rho = rho_next;
    pi_new = pi_next;
    cand.mu = mu_next;

    if (it % cfg.checkpoint_every == 0) {
      checkpoint_cand = cand;
      checkpoint_pi = pi_new;
    }
    if (patience.expired(tr.moving_avg.back())) break;
  }

  CmgvaState out = flatten({&state, &cand, pi_new});
  out.frozen_through = out.component_count();
  return {std::move(out), std::move(tr)};
}

BoostResult boost(const TargetModel& target, const BoostConfig& cfg, Rng& rng) {
  validate_config(cfg);
  BoostResult out;
  out.trace.window = cfg.elbo_window;

  auto absorb = [&out](const ElboTrace& tr) {
    out.trace.elbo.insert(out.trace.elbo.end(), tr.elbo.begin(), tr.elbo.end());
    out.trace.moving_avg.insert(out.trace.moving_avg.end(), tr.moving_avg.begin(),
                                tr.moving_avg.end());
    out.trace.k_index.insert(out.trace.k_index.end(), tr.k_index.begin(), tr.k_index.end());
  };

  ElboTrace first_trace;
  bool round_diverged = false;
  out.states.push_back(fit_first_component(target, cfg, rng, &first_trace, &round_diverged));
  out.window_elbo.push_back(first_trace.window_average(cfg.elbo_window));
  out.diverged = out.diverged || round_diverged;
  absorb(first_trace);

  for (int k = 2; k <= cfg.max_components; ++k) {
    auto [next_state, round_trace] = add_component(target, out.states.back(), cfg, rng,
                                                   &round_diverged);
    out.states.push_back(std::move(next_state));
    out.window_elbo.push_back(round_trace.window_average(cfg.elbo_window));
    out.diverged = out.diverged || round_diverged;
    absorb(round_trace);
  }

  out.best_k = 1;
  double best = kNegInf;
  for (std::size_t i = 0; i < out.window_elbo.size(); ++i) {
    if (std::isfinite(out.window_elbo[i]) && out.window_elbo[i] > best) {
      best = out.window_elbo[i];
      out.best_k = static_cast<int>(i) + 1;
    }
  }
  return out;
}

}  // namespace cmgva
