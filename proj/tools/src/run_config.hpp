#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cmgva/booster.hpp"
#include "cmgva/dfnn.hpp"
#include "cmgva/targets.hpp"

namespace cmgva::cli {

// Thrown for anything the user handed us: unreadable files, malformed
// configs, schema mismatches. Commands translate it to exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RunMode { kCmgva, kGaussianCopula, kMixtureNormal };

RunMode parse_mode(const std::string& name);  // throws InputError

// Everything a run needs, read from one sectioned key=value file:
//   [target]  kind plus its parameters (see the README for the grammar)
//   [boost]   any BoostConfig field, defaults applied per field
//   [output]  dir
struct RunConfig {
  std::string kind;  // gaussian | mixnormal | tcopula | logistic | linear | dfnn
  // gaussian / mixnormal / tcopula parameters
  Eigen::MatrixXd modes;  // one row per mode (mixnormal); unused otherwise
  int dim = 0;
  double rho = 0.0;
  double df = 4.0;
  double gamma0 = 1.0;
  // dataset-backed targets
  std::string data_path;  // resolved relative to the config file
  std::string response;
  bool interactions = false;
  DfnnSpec dfnn;

  BoostConfig boost;
  std::string out_dir;
};

RunConfig load_run_config(const std::string& path);  // throws InputError

// Forces the comparison-mode restrictions onto the boost settings: the
// Gaussian copula is the single-component special case, the mixture of
// normals pins every transform parameter at one.
void apply_mode(RunConfig& rc, RunMode mode);

// The target model plus what pps needs to rebuild a matching test design.
struct TargetBundle {
  std::unique_ptr<TargetModel> generic;
  std::unique_ptr<RegressionModel> regression;
  std::vector<std::string> covariate_names;  // raw csv columns, dataset targets

  TargetModel& target() { return regression ? *regression : *generic; }
};

TargetBundle build_target(const RunConfig& rc);  // throws InputError

// Design matrix in the layout used at training time: raw columns for a dfnn,
// otherwise an intercept column plus mains (plus pairwise products when
// interactions were enabled).
Eigen::MatrixXd build_design(const RunConfig& rc, const Eigen::MatrixXd& x_raw);

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace cmgva::cli
