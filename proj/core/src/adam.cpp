#include "cmgva/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cmgva {

Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& grad) {
  if (grad.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: gradient size mismatch");
  }
  state.step += 1;
  state.m = state.tau1 * state.m + (1.0 - state.tau1) * grad;
  state.v = state.tau2 * state.v + (1.0 - state.tau2) * grad.cwiseProduct(grad);
  const double mc = 1.0 - std::pow(state.tau1, static_cast<double>(state.step));
  const double vc = 1.0 - std::pow(state.tau2, static_cast<double>(state.step));
  Eigen::VectorXd delta(grad.size());
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double mhat = state.m[i] / mc;
    const double vhat = state.v[i] / vc;
    delta[i] = state.alpha * mhat / (std::sqrt(vhat) + state.eps);
  }
  return delta;
}

}  // namespace cmgva
