// Microbenchmarks for the hot paths: density evaluation, sampling, the
// factor-structure solve against a dense factorisation, and one estimator
// sweep of the kind the optimiser performs per iteration.

#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "cmgva/elbo.hpp"
#include "cmgva/factor_gaussian.hpp"
#include "cmgva/mixture.hpp"
#include "cmgva/rng.hpp"
#include "cmgva/targets.hpp"

namespace {

using namespace cmgva;

Component make_component(Eigen::Index m, Eigen::Index r, Rng& rng) {
  Component c;
  c.mu = rng.normal_vector(m);
  c.beta = Eigen::MatrixXd::Zero(m, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = j; i < m; ++i) c.beta(i, j) = 0.5 * rng.normal();
  }
  c.d = Eigen::VectorXd::Constant(m, 0.9);
  return c;
}

CmgvaState make_state(Eigen::Index m, int k, Eigen::Index r, Rng& rng) {
  std::vector<Component> comps;
  for (int j = 0; j < k; ++j) comps.push_back(make_component(m, r, rng));
  Eigen::VectorXd gamma = Eigen::VectorXd::Constant(m, 0.8);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(k, 1.0 / k);
  return CmgvaState{YjVector(gamma), std::move(comps), std::move(w), 0};
}

void BM_MixtureLogDensity(benchmark::State& state) {
  const auto m = static_cast<Eigen::Index>(state.range(0));
  Rng rng(1);
  const CmgvaState st = make_state(m, 3, 2, rng);
  const MixtureEvaluator eval(st);
  const Eigen::VectorXd theta = rng.normal_vector(m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval.log_density_theta(theta));
  }
}
BENCHMARK(BM_MixtureLogDensity)->Arg(5)->Arg(10)->Arg(50);

void BM_MixtureSample(benchmark::State& state) {
  const auto m = static_cast<Eigen::Index>(state.range(0));
  Rng rng(2);
  const CmgvaState st = make_state(m, 3, 2, rng);
  const MixtureEvaluator eval(st);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval.sample(rng));
  }
}
BENCHMARK(BM_MixtureSample)->Arg(5)->Arg(10)->Arg(50);

void BM_FactorSolve(benchmark::State& state) {
  const auto m = static_cast<Eigen::Index>(state.range(0));
  Rng rng(3);
  const Component c = make_component(m, 4, rng);
  const FactorGaussian fg(c);
  const Eigen::VectorXd phi = c.mu + rng.normal_vector(m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fg.log_density(phi));
  }
}
BENCHMARK(BM_FactorSolve)->Arg(10)->Arg(50)->Arg(200);

void BM_DenseSolve(benchmark::State& state) {
  const auto m = static_cast<Eigen::Index>(state.range(0));
  Rng rng(3);
  const Component c = make_component(m, 4, rng);
  const Eigen::MatrixXd sigma = c.covariance();
  const Eigen::VectorXd phi = c.mu + rng.normal_vector(m);
  for (auto _ : state) {
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    const Eigen::VectorXd diff = phi - c.mu;
    const double quad = diff.dot(llt.solve(diff));
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    benchmark::DoNotOptimize(quad + logdet);
  }
}
BENCHMARK(BM_DenseSolve)->Arg(10)->Arg(50)->Arg(200);

void BM_GradientSweep(benchmark::State& state) {
  const Eigen::Index m = 10;
  Rng rng(4);
  const CmgvaState st = make_state(m, 1, 4, rng);
  const Component cand = make_component(m, 1, rng);
  const auto target = make_mixture_normal_target(Eigen::MatrixXd::Zero(1, m), 0.5);
  const ControlVariates cv = ControlVariates::zero(vech(cand.beta).size(), m);
  Rng draw(5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        cv_gradient_estimate(*target, st, cand, 0.4, cv, 50, draw));
  }
}
BENCHMARK(BM_GradientSweep);

}  // namespace

BENCHMARK_MAIN();
