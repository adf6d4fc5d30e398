#include "cmgva/dataset.hpp"

#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmgva {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // Trim surrounding whitespace and a possible trailing carriage return.
    const auto first = field.find_first_not_of(" \t\r");
    const auto last = field.find_last_not_of(" \t\r");
    fields.push_back(first == std::string::npos ? std::string()
                                                : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& text, std::size_t line_no, std::size_t col) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) {
    throw std::runtime_error("csv line " + std::to_string(line_no) + ", column " +
                             std::to_string(col + 1) + ": not a number: '" + text + "'");
  }
  return value;
}

}  // namespace

Dataset read_csv_dataset(const std::string& path, const std::string& response) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv file: " + path);
  const std::vector<std::string> header = split_csv_line(line);

  std::ptrdiff_t y_col = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == response) {
      y_col = static_cast<std::ptrdiff_t>(j);
      break;
    }
  }
  if (y_col < 0) {
    throw std::runtime_error("response column '" + response + "' not found in " + path);
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) row[j] = parse_number(fields[j], line_no, j);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("csv file has no data rows: " + path);

  Dataset out;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(header.size()) - 1;
  out.x.resize(n, p);
  out.y.resize(n);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (static_cast<std::ptrdiff_t>(j) != y_col) out.covariate_names.push_back(header[j]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (static_cast<std::ptrdiff_t>(j) == y_col) {
        out.y[i] = rows[static_cast<std::size_t>(i)][j];
      } else {
        out.x(i, col++) = rows[static_cast<std::size_t>(i)][j];
      }
    }
  }
  return out;
}

Eigen::MatrixXd expand_interactions(const Eigen::MatrixXd& x_raw) {
  const Eigen::Index n = x_raw.rows(), p = x_raw.cols();
  Eigen::MatrixXd out(n, 1 + p + p * (p - 1) / 2);
  out.col(0).setOnes();
  out.middleCols(1, p) = x_raw;
  Eigen::Index col = 1 + p;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) {
      out.col(col++) = x_raw.col(i).cwiseProduct(x_raw.col(j));
    }
  }
  return out;
}

std::vector<std::string> interaction_names(const std::vector<std::string>& raw_names) {
  std::vector<std::string> names;
  const std::size_t p = raw_names.size();
  names.reserve(1 + p + p * (p - 1) / 2);
  names.emplace_back("intercept");
  for (const auto& name : raw_names) names.push_back(name);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) {
      names.push_back(raw_names[i] + ":" + raw_names[j]);
    }
  }
  return names;
}

}  // namespace cmgva
