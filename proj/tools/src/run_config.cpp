#include "run_config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cmgva/dataset.hpp"

namespace cmgva::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

// One parsed config file with line numbers kept for error anchoring.
struct KeyValueFile {
  std::string path;
  std::map<std::string, std::string> values;  // "section.key" -> value
  std::map<std::string, int> lines;
  mutable std::set<std::string> consumed;

  [[noreturn]] void fail_at(const std::string& full_key, const std::string& what) const {
    throw InputError(path + ":" + std::to_string(lines.at(full_key)) + ": " + what);
  }

  bool has(const std::string& section, const std::string& key) const {
    return values.count(section + "." + key) != 0;
  }

  const std::string* get(const std::string& section, const std::string& key) const {
    const std::string full = section + "." + key;
    auto it = values.find(full);
    if (it == values.end()) return nullptr;
    consumed.insert(full);
    return &it->second;
  }

  void reject_unconsumed() const {
    for (const auto& [full, value] : values) {
      if (!consumed.count(full)) fail_at(full, "unknown key '" + full + "'");
    }
  }
};

KeyValueFile parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  KeyValueFile f;
  f.path = path;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;
    if (text.front() == '[') {
      if (text.back() != ']') {
        throw InputError(path + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(text.substr(1, text.size() - 2));
      if (section.empty()) {
        throw InputError(path + ":" + std::to_string(line_no) + ": empty section name");
      }
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw InputError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(text.substr(0, eq));
    if (key.empty() || section.empty()) {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": key outside a section or empty key");
    }
    const std::string full = section + "." + key;
    if (f.values.count(full)) {
      throw InputError(path + ":" + std::to_string(line_no) + ": duplicate key '" + full + "'");
    }
    f.values[full] = trim(text.substr(eq + 1));
    f.lines[full] = line_no;
  }
  return f;
}

// Typed getters; parse failures point at the offending line.
double to_double(const KeyValueFile& f, const std::string& full, const std::string& raw) {
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    f.fail_at(full, "expected a number, got '" + raw + "'");
  }
}

int to_int(const KeyValueFile& f, const std::string& full, const std::string& raw) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    f.fail_at(full, "expected an integer, got '" + raw + "'");
  }
}

bool to_bool(const KeyValueFile& f, const std::string& full, const std::string& raw) {
  if (raw == "true" || raw == "yes" || raw == "1") return true;
  if (raw == "false" || raw == "no" || raw == "0") return false;
  f.fail_at(full, "expected true/false, got '" + raw + "'");
}

struct Reader {
  const KeyValueFile& f;
  std::string section;

  const std::string* raw(const std::string& key) const { return f.get(section, key); }
  std::string full(const std::string& key) const { return section + "." + key; }

  void number(const std::string& key, double& out) const {
    if (const auto* r = raw(key)) out = to_double(f, full(key), *r);
  }
  void integer(const std::string& key, int& out) const {
    if (const auto* r = raw(key)) out = to_int(f, full(key), *r);
  }
  void boolean(const std::string& key, bool& out) const {
    if (const auto* r = raw(key)) out = to_bool(f, full(key), *r);
  }
  void text(const std::string& key, std::string& out) const {
    if (const auto* r = raw(key)) out = *r;
  }
};

Eigen::MatrixXd parse_modes(const KeyValueFile& f, const std::string& full,
                            const std::string& raw) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(raw);
  std::string row_text;
  while (std::getline(ss, row_text, ';')) {
    std::vector<double> row;
    for (const auto& tok : split_ws(row_text)) row.push_back(to_double(f, full, tok));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) f.fail_at(full, "no mode centres given");
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) f.fail_at(full, "mode rows differ in length");
  }
  Eigen::MatrixXd modes(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < modes.rows(); ++i) {
    for (Eigen::Index j = 0; j < modes.cols(); ++j) {
      modes(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return modes;
}

Dataset load_dataset(const RunConfig& rc) {
  if (rc.data_path.empty()) throw InputError("target kind '" + rc.kind + "' needs data = <csv>");
  if (rc.response.empty()) throw InputError("target kind '" + rc.kind + "' needs response = <column>");
  try {
    return read_csv_dataset(rc.data_path, rc.response);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

}  // namespace

RunMode parse_mode(const std::string& name) {
  if (name == "cmgva") return RunMode::kCmgva;
  if (name == "gcopula") return RunMode::kGaussianCopula;
  if (name == "mixnorm") return RunMode::kMixtureNormal;
  throw InputError("unknown mode '" + name + "' (expected cmgva, gcopula or mixnorm)");
}

RunConfig load_run_config(const std::string& path) {
  const KeyValueFile f = parse_file(path);
  RunConfig rc;

  Reader target{f, "target"};
  target.text("kind", rc.kind);
  if (rc.kind.empty()) throw InputError(path + ": missing target.kind");
  if (const auto* r = target.raw("modes")) rc.modes = parse_modes(f, target.full("modes"), *r);
  target.integer("dim", rc.dim);
  target.number("rho", rc.rho);
  target.number("df", rc.df);
  target.number("gamma0", rc.gamma0);
  target.text("data", rc.data_path);
  target.text("response", rc.response);
  target.boolean("interactions", rc.interactions);
  if (!rc.data_path.empty()) {
    const std::filesystem::path p(rc.data_path);
    if (p.is_relative()) {
      rc.data_path = (std::filesystem::path(path).parent_path() / p).string();
    }
  }
  if (const auto* r = target.raw("layers")) {
    rc.dfnn.layers.clear();
    for (const auto& tok : split_ws(*r)) {
      rc.dfnn.layers.push_back(to_int(f, target.full("layers"), tok));
    }
  }
  if (const auto* r = target.raw("hidden_bias")) {
    rc.dfnn.hidden_bias.clear();
    for (const auto& tok : split_ws(*r)) {
      rc.dfnn.hidden_bias.push_back(to_bool(f, target.full("hidden_bias"), tok));
    }
  }
  target.boolean("output_bias", rc.dfnn.output_bias);
  target.number("prior_alpha", rc.dfnn.alpha);

  Reader boost{f, "boost"};
  boost.integer("sample_count", rc.boost.sample_count);
  boost.integer("iters_first", rc.boost.iters_first);
  boost.integer("iters_per_component", rc.boost.iters_per_component);
  boost.integer("max_components", rc.boost.max_components);
  boost.integer("r_first", rc.boost.r_first);
  boost.integer("r_added", rc.boost.r_added);
  boost.number("alpha_mu", rc.boost.alpha_mu);
  boost.number("alpha_beta", rc.boost.alpha_beta);
  boost.number("alpha_d", rc.boost.alpha_d);
  boost.number("alpha_pi", rc.boost.alpha_pi);
  boost.number("alpha_gamma", rc.boost.alpha_gamma);
  boost.boolean("learn_gamma", rc.boost.learn_gamma);
  boost.number("gamma_init", rc.boost.gamma_init);
  boost.integer("elbo_window", rc.boost.elbo_window);
  boost.integer("patience", rc.boost.patience);
  boost.integer("checkpoint_every", rc.boost.checkpoint_every);
  if (const auto* r = boost.raw("seed")) {
    try {
      rc.boost.seed = std::stoull(*r);
    } catch (const std::exception&) {
      f.fail_at(boost.full("seed"), "expected a nonnegative integer, got '" + *r + "'");
    }
  }
  boost.number("init_beta_sd", rc.boost.init_beta_sd);
  boost.number("init_d", rc.boost.init_d);
  boost.number("init_pi", rc.boost.init_pi);
  boost.number("first_init_d", rc.boost.first_init_d);
  if (const auto* r = boost.raw("init_mode")) {
    if (*r == "auto") rc.boost.init_mode = NewMeanMode::kAuto;
    else if (*r == "grid") rc.boost.init_mode = NewMeanMode::kGrid;
    else if (*r == "importance") rc.boost.init_mode = NewMeanMode::kImportance;
    else f.fail_at(boost.full("init_mode"), "expected auto, grid or importance");
  }
  boost.boolean("init_proportional", rc.boost.init_proportional);
  if (const auto* r = boost.raw("d_curvature")) {
    if (*r == "exact") rc.boost.natgrad.d_curvature = DCurvature::kExact;
    else if (*r == "variance") rc.boost.natgrad.d_curvature = DCurvature::kVariance;
    else if (*r == "precision") rc.boost.natgrad.d_curvature = DCurvature::kPrecision;
    else f.fail_at(boost.full("d_curvature"), "expected exact, variance or precision");
  }
  boost.integer("threads", rc.boost.threads);

  Reader output{f, "output"};
  output.text("dir", rc.out_dir);

  f.reject_unconsumed();
  return rc;
}

void apply_mode(RunConfig& rc, RunMode mode) {
  switch (mode) {
    case RunMode::kCmgva:
      break;
    case RunMode::kGaussianCopula:
      rc.boost.max_components = 1;
      break;
    case RunMode::kMixtureNormal:
      rc.boost.learn_gamma = false;
      rc.boost.gamma_init = 1.0;
      break;
  }
}

Eigen::MatrixXd build_design(const RunConfig& rc, const Eigen::MatrixXd& x_raw) {
  if (rc.kind == "dfnn") return x_raw;
  if (rc.interactions) return expand_interactions(x_raw);
  Eigen::MatrixXd design(x_raw.rows(), x_raw.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x_raw.cols()) = x_raw;
  return design;
}

TargetBundle build_target(const RunConfig& rc) {
  TargetBundle tb;
  if (rc.kind == "gaussian") {
    const int m = rc.dim > 0 ? rc.dim : static_cast<int>(rc.modes.cols());
    if (m < 1) throw InputError("target.gaussian needs dim = <m> or a modes row");
    Eigen::MatrixXd modes = rc.modes;
    if (modes.rows() == 0) modes = Eigen::MatrixXd::Zero(1, m);
    if (modes.rows() != 1) throw InputError("target.gaussian takes exactly one mode centre");
    tb.generic = make_mixture_normal_target(modes, rc.rho);
  } else if (rc.kind == "mixnormal") {
    if (rc.modes.rows() == 0) throw InputError("target.mixnormal needs modes = r1; r2; ...");
    tb.generic = make_mixture_normal_target(rc.modes, rc.rho);
  } else if (rc.kind == "tcopula") {
    if (rc.dim < 1) throw InputError("target.tcopula needs dim = <m>");
    tb.generic = make_t_copula_target(rc.dim, rc.rho, rc.df, rc.gamma0);
  } else if (rc.kind == "logistic" || rc.kind == "linear") {
    Dataset data = load_dataset(rc);
    tb.covariate_names = data.covariate_names;
    const Eigen::MatrixXd design = build_design(rc, data.x);
    if (rc.kind == "logistic") {
      for (Eigen::Index i = 0; i < data.y.size(); ++i) {
        if (data.y[i] != 0.0 && data.y[i] != 1.0) {
          throw InputError("logistic response must be 0/1; row " + std::to_string(i + 1) +
                           " has " + format_double(data.y[i]));
        }
      }
      tb.regression = make_logistic_target(design, data.y);
    } else {
      tb.regression = make_linear_target(design, data.y);
    }
  } else if (rc.kind == "dfnn") {
    Dataset data = load_dataset(rc);
    tb.covariate_names = data.covariate_names;
    if (rc.dfnn.layers.empty()) throw InputError("target.dfnn needs layers = in h1 ... 1");
    if (rc.dfnn.layers.front() != static_cast<int>(data.x.cols())) {
      throw InputError("dfnn input width " + std::to_string(rc.dfnn.layers.front()) +
                       " does not match the csv's " + std::to_string(data.x.cols()) +
                       " covariates");
    }
    try {
      tb.regression = make_dfnn_target(rc.dfnn, data.x, data.y);
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  } else {
    throw InputError("unknown target.kind '" + rc.kind + "'");
  }
  return tb;
}

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace cmgva::cli
