#include <cmath>

#include <doctest.h>

#include "cmgva/adam.hpp"
#include "cmgva/rng.hpp"

using namespace cmgva;

TEST_SUITE_BEGIN("adam");

TEST_CASE("default constants") {
  const AdamState s = AdamState::init(2, 0.01);
  CHECK(s.tau1 == 0.9);
  CHECK(s.tau2 == 0.99);
  CHECK(s.eps == 1e-8);
  CHECK(s.alpha == 0.01);
  CHECK(s.step == 0);
  CHECK(s.m.isZero());
  CHECK(s.v.isZero());
}

TEST_CASE("zero gradient from a fresh state moves nothing") {
  AdamState s = AdamState::init(3, 0.001);
  const Eigen::VectorXd delta = adam_step(s, Eigen::VectorXd::Zero(3));
  CHECK(delta.isZero());
  CHECK(s.step == 1);
}

TEST_CASE("first step has magnitude alpha in the gradient's direction") {
  // Bias correction makes mhat = g and vhat = g^2, so the increment is
  // alpha g / (|g| + eps), within alpha * eps / |g| of alpha sign(g).
  AdamState s = AdamState::init(4, 0.003);
  Eigen::VectorXd g(4);
  g << 5.0, -0.02, 1e-4, -300.0;
  const Eigen::VectorXd delta = adam_step(s, g);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double sign = g[i] > 0 ? 1.0 : -1.0;
    CHECK(std::abs(delta[i] - 0.003 * sign) <= 0.003 * s.eps / std::abs(g[i]));
  }
}

TEST_CASE("second step on a repeated gradient matches the recurrence") {
  // Frozen from a direct evaluation of the moment recurrences with
  // tau1 = 0.9, tau2 = 0.99, alpha = 0.001, g = (1, -2) twice.
  AdamState s = AdamState::init(2, 0.001);
  Eigen::VectorXd g(2);
  g << 1.0, -2.0;
  adam_step(s, g);
  const Eigen::VectorXd delta = adam_step(s, g);
  CHECK(delta[0] == doctest::Approx(0.0009999999900000005).epsilon(1e-14));
  CHECK(delta[1] == doctest::Approx(-0.0009999999950000003).epsilon(1e-14));
  CHECK(s.step == 2);
}

TEST_CASE("steps stay bounded on erratic gradient sequences") {
  Rng rng(81);
  AdamState s = AdamState::init(3, 0.01);
  for (int t = 0; t < 500; ++t) {
    Eigen::VectorXd g = rng.normal_vector(3);
    g[0] *= std::exp(6.0 * rng.normal());  // wildly varying scale
    if (t % 7 == 0) g.setZero();
    const Eigen::VectorXd delta = adam_step(s, g);
    CHECK(delta.lpNorm<Eigen::Infinity>() <= 10.0 * s.alpha);
  }
}

TEST_SUITE_END();
