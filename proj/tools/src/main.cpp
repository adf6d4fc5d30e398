#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmgva/booster.hpp"
#include "cmgva/dataset.hpp"
#include "cmgva/mixture.hpp"
#include "cmgva/serialization.hpp"
#include "cmgva/yeo_johnson.hpp"

#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace cmgva;
using namespace cmgva::cli;
using nlohmann::json;

namespace {

// One run per output directory: the lock exists for the lifetime of the fit.
struct LockFile {
  std::string path;
  explicit LockFile(const std::string& dir) : path(dir + "/.cmgva.lock") {
    const int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw InputError("output directory already holds a run lock: " + path);
    }
    ::close(fd);
  }
  ~LockFile() { std::remove(path.c_str()); }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

CmgvaState load_checkpoint(const std::string& path) {
  try {
    return load_state(path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

struct FitArgs {
  std::string config_path;
  std::string out_dir;
  std::string mode = "cmgva";
  std::optional<std::uint64_t> seed;
};

int cmd_fit(const FitArgs& a) {
  RunConfig rc = load_run_config(a.config_path);
  if (!a.out_dir.empty()) rc.out_dir = a.out_dir;
  if (rc.out_dir.empty()) throw InputError("no output directory: set [output] dir or --out");
  if (a.seed) rc.boost.seed = *a.seed;
  apply_mode(rc, parse_mode(a.mode));
  try {
    validate_config(rc.boost);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  TargetBundle tb = build_target(rc);

  fs::create_directories(rc.out_dir);
  LockFile lock(rc.out_dir);

  Rng rng(rc.boost.seed);
  const BoostResult res = boost(tb.target(), rc.boost, rng);

  json manifest;
  manifest["format"] = "cmgva-run";
  manifest["version"] = 1;
  manifest["target_kind"] = rc.kind;
  manifest["mode"] = a.mode;
  manifest["seed"] = rc.boost.seed;
  manifest["best_k"] = res.best_k;
  manifest["window_elbo"] = res.window_elbo;
  manifest["diverged"] = res.diverged;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < res.states.size(); ++k) {
    const std::string name = "checkpoint_k" + std::to_string(k + 1) + ".json";
    save_state(res.states[k], rc.out_dir + "/" + name);
    names.push_back(name);
  }
  manifest["checkpoints"] = names;

  {
    auto trace = open_out(rc.out_dir + "/trace.csv");
    trace << "iter,K,elbo,elbo_ma\n";
    for (std::size_t i = 0; i < res.trace.size(); ++i) {
      trace << (i + 1) << ',' << res.trace.k_index[i] << ','
            << format_double(res.trace.elbo[i]) << ','
            << format_double(res.trace.moving_avg[i]) << '\n';
    }
  }
  {
    auto summary = open_out(rc.out_dir + "/summary.csv");
    summary << "K,elbo_last500_avg\n";
    for (std::size_t k = 0; k < res.window_elbo.size(); ++k) {
      summary << (k + 1) << ',' << format_double(res.window_elbo[k]) << '\n';
    }
  }
  open_out(rc.out_dir + "/manifest.json") << manifest.dump(2) << '\n';

  if (res.diverged) {
    std::cerr << "failure: the fit diverged; checkpoints and traces were still written to "
              << rc.out_dir << "\n";
    return 1;
  }
  std::cout << "best_k " << res.best_k << "\n";
  return 0;
}

struct SampleArgs {
  std::string checkpoint;
  std::string out_path;
  int n = 0;
  std::uint64_t seed = 1;
  std::string grid_path;
  int grid_points = 101;
  double grid_span = 4.0;
};

int cmd_sample(const SampleArgs& a) {
  const CmgvaState st = load_checkpoint(a.checkpoint);
  const Eigen::Index m = st.dim();
  const MixtureEvaluator eval(st);
  Rng rng(a.seed);

  auto out = open_out(a.out_path);
  for (Eigen::Index i = 0; i < m; ++i) out << (i ? "," : "") << "theta_" << (i + 1);
  out << '\n';
  for (int s = 0; s < a.n; ++s) {
    const MixtureSample draw = eval.sample(rng);
    for (Eigen::Index i = 0; i < m; ++i) {
      out << (i ? "," : "") << format_double(draw.theta[i]);
    }
    out << '\n';
  }

  if (!a.grid_path.empty()) {
    auto grid = open_out(a.grid_path);
    grid << "coord,theta,log_marginal\n";
    for (Eigen::Index i = 0; i < m; ++i) {
      // Per-coordinate moments of the mixture in transformed space.
      double mean = 0.0, second = 0.0;
      for (int k = 0; k < st.component_count(); ++k) {
        const Component& c = st.components[static_cast<std::size_t>(k)];
        const double var = c.beta.row(i).squaredNorm() + c.d[i] * c.d[i];
        mean += st.weights[k] * c.mu[i];
        second += st.weights[k] * (var + c.mu[i] * c.mu[i]);
      }
      const double sd = std::sqrt(std::max(second - mean * mean, 1e-12));
      const double gamma_i = st.yj.gamma()[i];
      for (int j = 0; j < a.grid_points; ++j) {
        const double frac = a.grid_points > 1
                                ? static_cast<double>(j) / (a.grid_points - 1)
                                : 0.5;
        const double phi = mean + a.grid_span * sd * (2.0 * frac - 1.0);
        const double theta = yj_inverse(phi, gamma_i);
        grid << (i + 1) << ',' << format_double(theta) << ','
             << format_double(marginal_log_density(i, theta, st)) << '\n';
      }
    }
  }
  return 0;
}

struct PpsArgs {
  std::string checkpoint;
  std::string config_path;
  std::string test_path;
  std::string out_path;
  int draws = 10000;
  std::uint64_t seed = 1;
};

int cmd_pps(const PpsArgs& a) {
  const RunConfig rc = load_run_config(a.config_path);
  TargetBundle tb = build_target(rc);
  if (!tb.regression) {
    throw InputError("target kind '" + rc.kind + "' has no predictive density; pps needs a regression target");
  }
  const CmgvaState st = load_checkpoint(a.checkpoint);
  if (st.dim() != tb.regression->dim()) {
    throw InputError("checkpoint dimension " + std::to_string(st.dim()) +
                     " does not match the target's " + std::to_string(tb.regression->dim()));
  }

  Dataset test;
  try {
    test = read_csv_dataset(a.test_path, rc.response);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (test.covariate_names != tb.covariate_names) {
    throw InputError("test csv covariates do not match the training schema");
  }
  const Eigen::MatrixXd x_test = build_design(rc, test.x);

  // Posterior mean point estimate from fresh approximation draws.
  Rng rng(a.seed);
  const MixtureEvaluator eval(st);
  Eigen::VectorXd theta_hat = Eigen::VectorXd::Zero(st.dim());
  for (int s = 0; s < a.draws; ++s) theta_hat += eval.sample(rng).theta;
  theta_hat /= static_cast<double>(a.draws);

  const double pps = posterior_predictive_score(*tb.regression, x_test, test.y, theta_hat);
  std::cout << "pps " << format_double(pps) << "\n";
  if (!a.out_path.empty()) {
    auto out = open_out(a.out_path);
    out << "n_test,draws,pps\n";
    out << test.y.size() << ',' << a.draws << ',' << format_double(pps) << '\n';
  }
  return 0;
}

template <typename F>
int protected_run(F&& body) {
  try {
    return body();
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-Gaussians copula variational fitter"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit an approximation and write run artifacts");
  fit->add_option("--config", fit_args.config_path, "Run configuration file")->required();
  fit->add_option("--out", fit_args.out_dir, "Output directory (overrides [output] dir)");
  fit->add_option("--seed", fit_args.seed, "Seed override");
  fit->add_option("--mode", fit_args.mode, "cmgva, gcopula or mixnorm")
      ->check(CLI::IsMember({"cmgva", "gcopula", "mixnorm"}));

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "Draw from a saved approximation");
  sample->add_option("--checkpoint", sample_args.checkpoint, "State file")->required();
  sample->add_option("--out", sample_args.out_path, "Sample csv path")->required();
  sample->add_option("--n", sample_args.n, "Number of draws")
      ->required()
      ->check(CLI::NonNegativeNumber);
  sample->add_option("--seed", sample_args.seed, "Sampling seed");
  sample->add_option("--grid", sample_args.grid_path, "Optional marginal-density grid csv");
  sample->add_option("--grid-points", sample_args.grid_points, "Grid points per coordinate")
      ->check(CLI::PositiveNumber);
  sample->add_option("--grid-span", sample_args.grid_span, "Half-width in marginal sds");

  PpsArgs pps_args;
  auto* pps = app.add_subcommand("pps", "Predictive score of a fit on held-out data");
  pps->add_option("--checkpoint", pps_args.checkpoint, "State file")->required();
  pps->add_option("--config", pps_args.config_path, "Run configuration file")->required();
  pps->add_option("--test", pps_args.test_path, "Held-out csv")->required();
  pps->add_option("--out", pps_args.out_path, "Optional result csv");
  pps->add_option("--draws", pps_args.draws, "Draws for the posterior mean")
      ->check(CLI::PositiveNumber);
  pps->add_option("--seed", pps_args.seed, "Sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (fit->parsed()) return protected_run([&] { return cmd_fit(fit_args); });
  if (sample->parsed()) return protected_run([&] { return cmd_sample(sample_args); });
  return protected_run([&] { return cmd_pps(pps_args); });
}
