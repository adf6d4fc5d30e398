#include "cmgva/serialization.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cmgva {

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& mat) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < mat.cols(); ++j) row.push_back(mat(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index r = m > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd mat(m, r);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != r) {
      throw std::invalid_argument("state json: ragged beta matrix");
    }
    for (Eigen::Index j = 0; j < r; ++j) mat(i, j) = rows[i][j].get<double>();
  }
  return mat;
}

}  // namespace

std::string state_to_json(const CmgvaState& state, int indent) {
  json doc;
  doc["format"] = "cmgva-state";
  doc["version"] = 1;
  doc["m"] = state.dim();
  doc["gamma"] = vector_to_json(state.yj.gamma());
  doc["weights"] = vector_to_json(state.weights);
  doc["frozen_through"] = state.frozen_through;
  json comps = json::array();
  for (const Component& c : state.components) {
    json jc;
    jc["mu"] = vector_to_json(c.mu);
    jc["beta"] = matrix_to_json(c.beta);
    jc["d"] = vector_to_json(c.d);
    comps.push_back(std::move(jc));
  }
  doc["components"] = std::move(comps);
  return doc.dump(indent);
}

CmgvaState state_from_json(const std::string& text) {
  json doc = json::parse(text);
  if (doc.value("format", "") != "cmgva-state") {
    throw std::invalid_argument("state json: unknown format tag");
  }
  const int version = doc.value("version", 0);
  if (version != 1) {
    throw std::invalid_argument("state json: unsupported version " + std::to_string(version));
  }
  CmgvaState state{YjVector(vector_from_json(doc.at("gamma"))), {}, {}, 0};
  state.weights = vector_from_json(doc.at("weights"));
  state.frozen_through = doc.value("frozen_through", 0);
  for (const json& jc : doc.at("components")) {
    Component c;
    c.mu = vector_from_json(jc.at("mu"));
    c.beta = matrix_from_json(jc.at("beta"));
    c.d = vector_from_json(jc.at("d"));
    state.components.push_back(std::move(c));
  }
  validate_state(state);
  return state;
}

void save_state(const CmgvaState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_state: cannot open " + path);
  out << state_to_json(state) << '\n';
}

CmgvaState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_state: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return state_from_json(text);
}

}  // namespace cmgva
