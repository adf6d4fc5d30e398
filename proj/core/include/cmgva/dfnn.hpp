#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>

#include "cmgva/targets.hpp"

namespace cmgva {

// Feed-forward ReLU regression network whose weights get a Bayesian
// treatment. theta packs, in order, the weight matrices (column-major, layer
// by layer), the bias vectors of the layers that carry one, the output
// weights (intercept first when present), then log sigma2 and log tau2.
//
// Priors: every network weight and every output slope is skew-normal with
// location 0, variance 1/sigma2 and shape alpha; sigma2 and tau2 get
// Gamma(shape 1, scale 10) priors on the original scale, mapped to the log
// scale with the Jacobian. The output intercept, when present, is flat.
// Observation model: y ~ N(output, 1/tau2).
struct DfnnSpec {
  std::vector<int> layers;        // input size, hidden sizes..., 1
  std::vector<bool> hidden_bias;  // one flag per hidden layer
  bool output_bias = true;
  double alpha = 4.0;             // prior shape for weights and slopes

  // Network weights and biases only; the two precision parameters are extra.
  int parameter_count() const;
  // parameter_count() + 2 (log sigma2, log tau2): the length of theta.
  int theta_dim() const;

  // Reference shapes used in the regression experiments. The wide net has
  // two 5-unit hidden layers on 11 inputs, biases on the second hidden layer
  // and the output: 55 + 30 + 6 = 91 network parameters. The narrow net has
  // the same hidden sizes on 9 inputs and no bias terms anywhere:
  // 45 + 25 + 5 = 75.
  static DfnnSpec reference_wide();
  static DfnnSpec reference_narrow();
};

std::unique_ptr<RegressionModel> make_dfnn_target(DfnnSpec spec, Eigen::MatrixXd x,
                                                  Eigen::VectorXd y);

}  // namespace cmgva
