#pragma once

#include <Eigen/Core>

namespace cmgva {

// First/second moment accumulators for bias-corrected adaptive steps.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double alpha = 0.001;
  double tau1 = 0.9;
  double tau2 = 0.99;
  double eps = 1e-8;

  static AdamState init(Eigen::Index n, double alpha_) {
    AdamState s;
    s.m = Eigen::VectorXd::Zero(n);
    s.v = Eigen::VectorXd::Zero(n);
    s.alpha = alpha_;
    return s;
  }
};

// Advances the accumulators and returns the ascent increment
//   delta = alpha * mhat / (sqrt(vhat) + eps),
// where mhat, vhat are the bias-corrected moment estimates. The first step
// has magnitude alpha * |g| / (|g| + eps) ~= alpha elementwise, and every
// step is bounded by alpha / (1 - tau1) elementwise.
Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& grad);

}  // namespace cmgva
