#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "cmgva/factor_gaussian.hpp"
#include "cmgva/mixture.hpp"
#include "cmgva/rng.hpp"

#include "support/dense_oracle.hpp"
#include "support/quadrature.hpp"
#include "support/random_instances.hpp"
#include "support/stats.hpp"
#include "support/target_adapters.hpp"

using namespace cmgva;
using namespace cmgva::testing;

namespace {

// Integration bounds in theta space wide enough to hold the transformed
// mass: the phi-space range of every component pushed through the inverse
// transform coordinate by coordinate.
std::pair<double, double> theta_bounds(const CmgvaState& st, Eigen::Index i,
                                       double sigmas = 10.0) {
  double lo = 1e300, hi = -1e300;
  for (int k = 0; k < st.component_count(); ++k) {
    const Component& c = st.components[static_cast<std::size_t>(k)];
    const double sd = std::sqrt(c.beta.row(i).squaredNorm() + c.d[i] * c.d[i]);
    lo = std::min(lo, c.mu[i] - sigmas * sd);
    hi = std::max(hi, c.mu[i] + sigmas * sd);
  }
  return {yj_inverse(lo, st.yj.gamma(i)), yj_inverse(hi, st.yj.gamma(i))};
}

}  // namespace

TEST_SUITE_BEGIN("mixture");

TEST_CASE("single identity-transform component reduces to the plain Gaussian") {
  Rng rng(31);
  const Component c = random_component(4, 2, rng);
  const CmgvaState st = single_state_gauss(c.mu, c.beta, c.d);
  validate_state(st);
  FactorGaussian fg(c);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd theta = rng.normal_vector(4) * 2.0;
    CHECK(log_density(theta, st) == doctest::Approx(fg.log_density(theta)).epsilon(1e-13));
  }
}

TEST_CASE("duplicated components collapse to the single-component value") {
  Rng rng(32);
  const Component c = random_component(3, 1, rng);
  CmgvaState two{YjVector(random_gamma(3, rng)), {c, c}, Eigen::VectorXd(2), 0};
  two.weights << 0.3, 0.7;
  CmgvaState one{two.yj, {c}, Eigen::VectorXd::Ones(1), 0};
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd theta = rng.normal_vector(3) * 2.0;
    CHECK(log_density(theta, two) == doctest::Approx(log_density(theta, one)).epsilon(1e-13));
  }
}

TEST_CASE("one-dimensional two-component transformed density integrates to one") {
  Rng rng(33);
  CmgvaState st = random_state(1, 2, 1, rng);
  st.yj.set_gamma(0, 0.5);
  const auto [lo, hi] = theta_bounds(st, 0);
  const double mass = integrate_1d(
      [&](double th) {
        return std::exp(log_density(Eigen::VectorXd::Constant(1, th), st));
      },
      lo, hi);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("normalization holds for random one- and two-dimensional states") {
  Rng rng(34);
  for (int t = 0; t < 4; ++t) {
    CmgvaState st = random_state(1, 1 + t % 3, 1, rng);
    const auto [lo, hi] = theta_bounds(st, 0);
    const double mass = integrate_1d(
        [&](double th) {
          return std::exp(log_density(Eigen::VectorXd::Constant(1, th), st));
        },
        lo, hi);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (int t = 0; t < 2; ++t) {
    CmgvaState st = random_state(2, 2 + t, 1, rng);
    const auto [lo0, hi0] = theta_bounds(st, 0);
    const auto [lo1, hi1] = theta_bounds(st, 1);
    const double wlo = std::min(lo0, lo1), whi = std::max(hi0, hi1);
    const double mass = integrate_2d(
        [&](double a, double b) {
          Eigen::VectorXd th(2);
          th << a, b;
          return std::exp(log_density(th, st));
        },
        wlo, whi);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("subtracting the jacobian recovers the transformed-space mixture") {
  Rng rng(35);
  const CmgvaState st = random_state(3, 2, 2, rng);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd theta = rng.normal_vector(3) * 1.5;
    const Eigen::VectorXd phi = st.yj.forward(theta);
    const double jac = st.yj.log_jacobian(theta);
    CHECK(log_density(theta, st) - jac ==
          doctest::Approx(log_density_phi(phi, st)).epsilon(1e-12));
  }
}

TEST_CASE("identity transform equals a dense mixture of normals everywhere") {
  Rng rng(36);
  const CmgvaState st = random_state(3, 3, 2, rng, /*identity_transform=*/true);
  std::vector<Eigen::VectorXd> mus;
  std::vector<Eigen::MatrixXd> sigmas;
  for (const Component& c : st.components) {
    mus.push_back(c.mu);
    sigmas.push_back(c.covariance());
  }
  for (int t = 0; t < 30; ++t) {
    const Eigen::VectorXd theta = rng.normal_vector(3) * 2.5;
    const double dense = dense_mixture_logpdf(theta, mus, sigmas, st.weights);
    CHECK(log_density(theta, st) == doctest::Approx(dense).epsilon(1e-11));
  }
}

TEST_CASE("marginal: Gaussian special case and unit mass") {
  Rng rng(37);
  const Component c = random_component(3, 2, rng);
  const CmgvaState st = single_state_gauss(c.mu, c.beta, c.d);
  const double var = c.beta.row(1).squaredNorm() + c.d[1] * c.d[1];
  for (double x = -3.0; x <= 3.0; x += 0.7) {
    const double want =
        -0.5 * (std::log(2.0 * M_PI * var) + (x - c.mu[1]) * (x - c.mu[1]) / var);
    CHECK(marginal_log_density(1, x, st) == doctest::Approx(want).epsilon(1e-12));
  }

  const CmgvaState wild = random_state(3, 2, 1, rng);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const auto [lo, hi] = theta_bounds(wild, i);
    const double mass = integrate_1d(
        [&](double th) { return std::exp(marginal_log_density(i, th, wild)); }, lo, hi);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("sampled coordinate matches its marginal density (chi-square)") {
  Rng rng(38);
  const CmgvaState st = random_state(2, 2, 1, rng);
  const int n = 100000;
  Rng sampler(39);
  const MixtureEvaluator eval(st);
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    xs[static_cast<std::size_t>(s)] = eval.sample(sampler).theta[0];
  }
  std::sort(xs.begin(), xs.end());
  const double q_lo = xs[static_cast<std::size_t>(0.01 * n)];
  const double q_hi = xs[static_cast<std::size_t>(0.99 * n) - 1];
  const int interior = 38;
  const double width = (q_hi - q_lo) / interior;

  std::vector<double> observed(interior + 2, 0.0), expected(interior + 2, 0.0);
  for (const double x : xs) {
    int b;
    if (x < q_lo) {
      b = 0;
    } else if (x >= q_hi) {
      b = interior + 1;
    } else {
      b = 1 + std::min(interior - 1, static_cast<int>((x - q_lo) / width));
    }
    observed[static_cast<std::size_t>(b)] += 1.0;
  }
  const auto marg = [&](double th) { return std::exp(marginal_log_density(0, th, st)); };
  const auto [support_lo, support_hi] = theta_bounds(st, 0, 14.0);
  expected[0] = n * integrate_1d(marg, support_lo, q_lo);
  expected[static_cast<std::size_t>(interior + 1)] = n * integrate_1d(marg, q_hi, support_hi);
  for (int b = 0; b < interior; ++b) {
    expected[static_cast<std::size_t>(b + 1)] =
        n * integrate_1d(marg, q_lo + b * width, q_lo + (b + 1) * width);
  }
  const double stat = chi_square_stat(observed, expected);
  CHECK(stat <= chi_square_crit_999(interior + 1));
}

TEST_CASE("sampling: component labels, frequencies, reproducibility") {
  Rng rng(40);
  const CmgvaState one = random_state(2, 1, 1, rng);
  Rng s1(41);
  for (const MixtureSample& s : sample(one, 200, s1)) CHECK(s.comp == 0);

  CmgvaState three = random_state(2, 3, 1, rng);
  three.weights << 0.5, 0.3, 0.2;
  const int n = 100000;
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  Rng s2(42);
  for (const MixtureSample& s : sample(three, n, s2)) counts[s.comp] += 1.0;
  for (int k = 0; k < 3; ++k) {
    const double p = three.weights[k];
    const double tol = 3.0 * std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(counts[k] / n - p) <= tol);
  }

  Rng s3(43), s4(43);
  const auto a = sample(three, 50, s3);
  const auto b = sample(three, 50, s4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].theta == b[i].theta);
    CHECK(a[i].comp == b[i].comp);
  }
}

TEST_CASE("responsibilities: identities and underflow handling") {
  Rng rng(44);
  const CmgvaState st = random_state(3, 1, 1, rng);

  // Trial component identical to the single existing one: equal shares.
  const Component same = st.components[0];
  Rng draw(45);
  const Eigen::VectorXd phi = MixtureEvaluator(st).sample(draw).phi;
  const Responsibilities eq = responsibilities(phi, st, same, 0.4);
  CHECK(eq.delta1 == doctest::Approx(eq.delta2).epsilon(1e-12));

  // Affine identity for arbitrary trial components and weights.
  for (int t = 0; t < 30; ++t) {
    const Component cand = random_component(3, 1, rng);
    const double pi = 0.05 + 0.9 * rng.uniform();
    const Eigen::VectorXd p = rng.normal_vector(3) * 2.0;
    const Responsibilities r = responsibilities(p, st, cand, pi);
    CHECK((1.0 - pi) * r.delta1 + pi * r.delta2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.delta1 >= 0.0);
    CHECK(r.delta2 >= 0.0);
    CHECK(r.per_component.sum() == doctest::Approx(r.delta1).epsilon(1e-10));

    // The cached-evaluator overload agrees with the from-scratch one.
    const MixtureEvaluator boosted(st, cand, pi);
    const Responsibilities r2 = responsibilities(p, boosted, pi);
    CHECK(r2.delta1 == doctest::Approx(r.delta1).epsilon(1e-12));
    CHECK(r2.delta2 == doctest::Approx(r.delta2).epsilon(1e-12));
  }

  // A candidate a hundred standard deviations away cannot claim any share.
  Component far = st.components[0];
  far.mu.array() += 100.0;
  const Responsibilities fr = responsibilities(st.components[0].mu, st, far, 0.3);
  CHECK(fr.delta2 == 0.0);
  CHECK(fr.delta1 == doctest::Approx(1.0 / 0.7).epsilon(1e-12));
}

TEST_CASE("flatten folds the trial component into a plain simplex") {
  Rng rng(46);
  CmgvaState st = random_state(2, 2, 1, rng);
  const Component cand = random_component(2, 1, rng);
  BoostedMixture boosted{&st, &cand, 0.25};
  const CmgvaState flat = flatten(boosted);
  REQUIRE(flat.component_count() == 3);
  validate_state(flat);
  CHECK(flat.weights[0] == doctest::Approx(0.75 * st.weights[0]).epsilon(1e-14));
  CHECK(flat.weights[1] == doctest::Approx(0.75 * st.weights[1]).epsilon(1e-14));
  CHECK(flat.weights[2] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(flat.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));

  // The flattened density is the boosted two-term convex combination.
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd theta = rng.normal_vector(2) * 2.0;
    const double direct = std::log(
        0.75 * std::exp(log_density(theta, st)) +
        0.25 * std::exp(FactorGaussian(cand).log_density(st.yj.forward(theta)) +
                        st.yj.log_jacobian(theta)));
    CHECK(log_density(theta, flat) == doctest::Approx(direct).epsilon(1e-11));
  }
}

TEST_CASE("state validation rejects broken invariants") {
  Rng rng(47);
  CmgvaState st = random_state(2, 2, 1, rng);
  validate_state(st);

  CmgvaState bad_w = st;
  bad_w.weights[0] += 0.1;
  CHECK_THROWS_AS(validate_state(bad_w), std::invalid_argument);

  CmgvaState bad_dim = st;
  bad_dim.components[0].mu = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(validate_state(bad_dim), std::invalid_argument);

  CmgvaState bad_tri = st;
  bad_tri.components[0].beta = Eigen::MatrixXd::Ones(2, 2);
  CHECK_THROWS_AS(validate_state(bad_tri), std::invalid_argument);
}

TEST_SUITE_END();
