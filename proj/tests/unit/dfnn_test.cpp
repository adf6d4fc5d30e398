#include <cmath>

#include <doctest.h>

#include "cmgva/dfnn.hpp"
#include "cmgva/rng.hpp"
#include "cmgva/special_functions.hpp"

#include "support/finite_diff.hpp"

using namespace cmgva;
using namespace cmgva::testing;

namespace {

// The network output at a parameter point, recovered from two predictive log
// densities at unit observation variance: log p(1|x) - log p(0|x) linear in
// the prediction.
double prediction(const RegressionModel& m, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& theta) {
  return 0.5 + m.log_pred_density(x, 1.0, theta) - m.log_pred_density(x, 0.0, theta);
}

}  // namespace

TEST_SUITE_BEGIN("dfnn");

TEST_CASE("reference shapes report the documented parameter totals") {
  const DfnnSpec wide = DfnnSpec::reference_wide();
  CHECK(wide.parameter_count() == 91);
  CHECK(wide.theta_dim() == 93);

  const DfnnSpec narrow = DfnnSpec::reference_narrow();
  CHECK(narrow.parameter_count() == 75);
  CHECK(narrow.theta_dim() == 77);
}

TEST_CASE("all-zero weights predict the output intercept alone") {
  const DfnnSpec spec = DfnnSpec::reference_wide();
  Rng rng(121);
  Eigen::MatrixXd x(3, 11);
  for (int i = 0; i < 3; ++i) x.row(i) = rng.normal_vector(11).transpose();
  Eigen::VectorXd y(3);
  y << 0.4, -1.0, 2.2;
  const auto t = make_dfnn_target(spec, x, y);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(spec.theta_dim());
  const int intercept = 55 + 25 + 5;  // after both weight blocks and one bias
  theta[intercept] = 0.7;
  for (int i = 0; i < 3; ++i) {
    CHECK(prediction(*t, x.row(i), theta) == doctest::Approx(0.7).epsilon(1e-10));
    // At log tau2 = 0 the predictive density is a unit normal around 0.7.
    CHECK(t->log_pred_density(x.row(i), y[i], theta) ==
          doctest::Approx(log_norm_pdf(y[i] - 0.7)).epsilon(1e-12));
  }
}

TEST_CASE("gradient against finite differences away from activation kinks") {
  const DfnnSpec spec = DfnnSpec::reference_narrow();
  Rng rng(122);
  const int n = 6;
  Eigen::MatrixXd x(n, 9);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x.row(i) = rng.normal_vector(9).transpose();
    y[i] = rng.normal();
  }
  const auto t = make_dfnn_target(spec, x, y);
  for (int k = 0; k < 8; ++k) {
    const Eigen::VectorXd theta = 0.6 * rng.normal_vector(spec.theta_dim());
    const Eigen::VectorXd fd = central_gradient(
        [&](const Eigen::VectorXd& v) { return t->log_density(v); }, theta, 1e-6);
    CHECK(max_rel_err(t->grad_log_density(theta), fd, 1e-4) <= 1e-4);
  }
}

TEST_CASE("output is piecewise linear in the inputs for fixed parameters") {
  const DfnnSpec spec = DfnnSpec::reference_wide();
  Rng rng(123);
  Eigen::MatrixXd x0(1, 11);
  x0.row(0) = rng.normal_vector(11).transpose();
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(1);
  const auto t = make_dfnn_target(spec, x0, y0);
  const Eigen::VectorXd theta = 0.5 * rng.normal_vector(spec.theta_dim());

  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd base = rng.normal_vector(11);
    const Eigen::VectorXd dir = rng.normal_vector(11);
    const double eps = 1e-4;
    const double f0 = prediction(*t, base, theta);
    const double f1 = prediction(*t, base + eps * dir, theta);
    const double f2 = prediction(*t, base + 2.0 * eps * dir, theta);
    // Within one linearity cell the second difference vanishes.
    CHECK(std::abs((f2 - f1) - (f1 - f0)) <= 1e-9 * (1.0 + std::abs(f1)));
  }
}

TEST_CASE("log prior stays finite for any finite parameter point") {
  const DfnnSpec spec = DfnnSpec::reference_narrow();
  Rng rng(124);
  Eigen::MatrixXd x(2, 9);
  x.row(0) = rng.normal_vector(9).transpose();
  x.row(1) = rng.normal_vector(9).transpose();
  Eigen::VectorXd y(2);
  y << 0.1, -0.4;
  const auto t = make_dfnn_target(spec, x, y);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd theta = 3.0 * rng.normal_vector(spec.theta_dim());
    CHECK(std::isfinite(t->log_density(theta)));
  }
}

TEST_SUITE_END();
