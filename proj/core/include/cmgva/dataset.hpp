#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace cmgva {

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> covariate_names;
};

// Reads a numeric CSV with a header row; the named response column becomes y
// and every other column a covariate, in file order. Throws on malformed
// rows or an unknown response name.
Dataset read_csv_dataset(const std::string& path, const std::string& response);

// Columns [intercept, x_1..x_p, x_i * x_j for i < j] built from a raw design
// without an intercept. The returned count is 1 + p + p(p-1)/2, so 11 raw
// covariates give 67 columns and 9 give 46.
Eigen::MatrixXd expand_interactions(const Eigen::MatrixXd& x_raw);

std::vector<std::string> interaction_names(const std::vector<std::string>& raw_names);

}  // namespace cmgva
