#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cmgva/elbo.hpp"
#include "cmgva/mixture.hpp"
#include "cmgva/natural_gradient.hpp"
#include "cmgva/rng.hpp"
#include "cmgva/targets.hpp"

namespace cmgva {

// How a trial component's mean is chosen: a per-coordinate grid search over
// the span of current-approximation draws, or the best of a set of full
// importance draws. kAuto picks the grid for m <= 20 and importance above.
enum class NewMeanMode { kGrid, kImportance, kAuto };

struct BoostConfig {
  int sample_count = 50;          // draws per gradient estimate
  int iters_first = 20000;
  int iters_per_component = 5000;
  int max_components = 8;
  int r_first = 4;                // factors of the first component
  int r_added = 1;                // factors of each added component
  double alpha_mu = 0.01;
  double alpha_beta = 0.001;
  double alpha_d = 0.001;
  double alpha_pi = 0.001;
  double alpha_gamma = 0.001;     // transform parameters, first fit only
  bool learn_gamma = true;        // false pins the transform at gamma_init
  double gamma_init = 1.0;
  int elbo_window = 500;          // window for moving averages and selection
  int patience = 0;               // early stop after this many iterations
                                  // without window improvement; 0 disables
  int checkpoint_every = 500;
  std::uint64_t seed = 1;
  double init_beta_sd = 0.01;     // loading entries start at N(0, sd^2)
  double init_d = 0.01;           // idiosyncratic scale of a trial component
  double init_pi = 0.5;
  double first_init_d = 1.0;      // first component starts at unit scale
  NewMeanMode init_mode = NewMeanMode::kAuto;
  bool init_proportional = false; // sample the candidate mean by weight
                                  // instead of taking the argmax
  // Trial components start as near-point masses, where the truncated
  // curvature forms lose sign coherence and stall the scale; the boosting
  // loop therefore defaults to the exact Fisher block.
  NaturalGradientOptions natgrad{DCurvature::kExact};
  int threads = 0;                // see resolve_thread_count
};

// Throws std::invalid_argument on nonsensical settings. Zero iteration
// budgets are legal (a no-op fit); counts and step sizes must be positive.
void validate_config(const BoostConfig& cfg);

struct ElboTrace {
  std::vector<double> elbo;        // per-iteration estimates
  std::vector<double> moving_avg;  // trailing mean over at most `window`
  std::vector<int> k_index;        // component count in force per iteration
  int window = 500;

  void append(double value, int k);
  std::size_t size() const { return elbo.size(); }
  // Mean of the last min(last_n, size) entries; NaN when empty.
  double window_average(int last_n) const;
};

struct BoostResult {
  std::vector<CmgvaState> states;  // states[k-1] has k components
  std::vector<double> window_elbo; // selection score per k
  int best_k = 1;                  // argmax of window_elbo (first on ties)
  ElboTrace trace;                 // all rounds, labelled by k_index
  bool diverged = false;           // some round hit the non-finite guard
};

// Fits the single-component approximation: the transform parameters (unless
// pinned), mean, loadings and scales are optimised jointly by score-function
// gradients with lagged control variates and one ADAM block per parameter
// group. Every `checkpoint_every` iterations the state is snapshotted; a
// non-finite ELBO or parameter restores the snapshot, dumps a diagnostic to
// stderr and ends the fit early (flagged through `diverged`).
CmgvaState fit_first_component(const TargetModel& target, const BoostConfig& cfg,
                               Rng& rng, ElboTrace* trace = nullptr,
                               bool* diverged = nullptr);

// Mean initialisation for the next component: prefers regions where the
// target density exceeds the current approximation, measured by the log
// ratio at candidate points. Grid mode scans each coordinate over the span
// of n_samples approximation draws with the other coordinates held at the
// mixture mean; importance mode scores whole draws. If every candidate
// weight comes back non-finite the fallback is a fresh draw's location.
Eigen::VectorXd init_new_mean(const TargetModel& target, const CmgvaState& state,
                              int n_samples, NewMeanMode mode, Rng& rng,
                              bool proportional = false);

// One boosting round: initialises a trial component and runs
// iters_per_component iterations of
//   draw -> control-variate corrected (beta, d) gradients -> closed-form
//   natural-gradient transform (rank one) -> ADAM step -> fresh draws ->
//   weight and mean natural-gradient steps,
// then flattens the trial component into the state. The input components are
// never touched (they are bit-identical in the result) and the transform
// stays fixed. Checkpoint/revert behaviour as in fit_first_component.
std::pair<CmgvaState, ElboTrace> add_component(const TargetModel& target,
                                               const CmgvaState& state,
                                               const BoostConfig& cfg, Rng& rng,
                                               bool* diverged = nullptr);

// Full pipeline: first fit, then up to max_components - 1 added components,
// scoring each k by the trailing-window ELBO average of its round and
// selecting the argmax. Per-k states and scores are all reported; a later k
// is allowed to score worse (the trace records it either way).
BoostResult boost(const TargetModel& target, const BoostConfig& cfg, Rng& rng);

}  // namespace cmgva
