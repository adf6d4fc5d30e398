#include <sys/wait.h>
#include <unistd.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "cmgva/mixture.hpp"
#include "cmgva/serialization.hpp"
#include "cmgva/yeo_johnson.hpp"

#include "cmgva/dataset.hpp"
#include "cmgva/targets.hpp"

#include "support/random_instances.hpp"
#include "support/target_adapters.hpp"

#ifndef CMGVA_CLI_PATH
#error "CMGVA_CLI_PATH must point at the command line binary"
#endif

namespace fs = std::filesystem;
using namespace cmgva;
using namespace cmgva::testing;

namespace {

int temp_counter = 0;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("cmgva_cli_" + std::to_string(::getpid()) + "_" + std::to_string(temp_counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << body;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the driver through the shell; env assignments may prefix the args.
CmdResult run_cli(const std::string& args, const std::string& env = "") {
  static int run_id = 0;
  const std::string out_path =
      (fs::temp_directory_path() / ("cmgva_cli_out_" + std::to_string(::getpid()) + "_" +
                                    std::to_string(run_id))).string();
  const std::string err_path = out_path + ".err";
  ++run_id;
  const std::string cmd = env + (env.empty() ? "" : " ") + CMGVA_CLI_PATH + " " + args +
                          " > " + out_path + " 2> " + err_path;
  const int raw = std::system(cmd.c_str());
  CmdResult res;
  res.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  res.out = read_file(out_path);
  res.err = read_file(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return res;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& body) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    rows.push_back(fields);
  }
  return rows;
}

double parse_double(const std::string& tok) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  REQUIRE(res.ec == std::errc());
  REQUIRE(res.ptr == tok.data() + tok.size());
  return v;
}

std::string shortest(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string quick_gaussian_config(int max_components, const std::string& out_dir = "") {
  std::string cfg =
      "[target]\n"
      "kind = gaussian\n"
      "dim = 4\n"
      "\n"
      "[boost]\n"
      "sample_count = 15\n"
      "iters_first = 300\n"
      "iters_per_component = 200\n"
      "max_components = " + std::to_string(max_components) + "\n"
      "elbo_window = 100\n"
      "checkpoint_every = 100\n"
      "seed = 4\n";
  if (!out_dir.empty()) cfg += "\n[output]\ndir = " + out_dir + "\n";
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("fit writes segmented trace, per-size summary, checkpoints and manifest") {
  TempDir dir;
  const std::string cfg = dir / "run.ini";
  write_file(cfg, quick_gaussian_config(3));
  const std::string out = dir / "run";

  const CmdResult res = run_cli("fit --config " + cfg + " --out " + out);
  CHECK(res.code == 0);
  CHECK(res.out.find("best_k") != std::string::npos);

  const auto trace = parse_csv(read_file(out + "/trace.csv"));
  REQUIRE(trace.size() == 1 + 300 + 200 + 200);
  CHECK(trace[0] == std::vector<std::string>{"iter", "K", "elbo", "elbo_ma"});
  CHECK(trace[1][0] == "1");
  CHECK(trace[1][1] == "1");
  CHECK(trace[300][1] == "1");
  CHECK(trace[301][1] == "2");
  CHECK(trace[500][1] == "2");
  CHECK(trace[501][1] == "3");
  CHECK(trace.back()[0] == "700");

  const auto summary = parse_csv(read_file(out + "/summary.csv"));
  REQUIRE(summary.size() == 4);
  CHECK(summary[0] == std::vector<std::string>{"K", "elbo_last500_avg"});
  CHECK(summary[1][0] == "1");
  CHECK(summary[3][0] == "3");

  for (int k = 1; k <= 3; ++k) {
    CHECK(fs::exists(out + "/checkpoint_k" + std::to_string(k) + ".json"));
  }
  const std::string manifest = read_file(out + "/manifest.json");
  CHECK(manifest.find("\"best_k\"") != std::string::npos);
  CHECK(manifest.find("\"window_elbo\"") != std::string::npos);
  // The lock is released once the run finishes.
  CHECK(!fs::exists(out + "/.cmgva.lock"));
}

TEST_CASE("emitted csv numbers survive a parse and re-emit round trip") {
  TempDir dir;
  const std::string cfg = dir / "run.ini";
  write_file(cfg, quick_gaussian_config(2));
  const std::string out = dir / "run";
  REQUIRE(run_cli("fit --config " + cfg + " --out " + out).code == 0);

  const auto trace = parse_csv(read_file(out + "/trace.csv"));
  for (std::size_t i = 1; i < trace.size(); ++i) {
    CHECK(shortest(parse_double(trace[i][2])) == trace[i][2]);
    CHECK(shortest(parse_double(trace[i][3])) == trace[i][3]);
  }
}

TEST_CASE("the same config and seed reproduce every artifact byte for byte") {
  TempDir dir;
  const std::string cfg = dir / "run.ini";
  write_file(cfg, quick_gaussian_config(2));
  const std::string a = dir / "a";
  const std::string b = dir / "b";
  REQUIRE(run_cli("fit --config " + cfg + " --out " + a).code == 0);
  REQUIRE(run_cli("fit --config " + cfg + " --out " + b).code == 0);
  CHECK(read_file(a + "/trace.csv") == read_file(b + "/trace.csv"));
  CHECK(read_file(a + "/summary.csv") == read_file(b + "/summary.csv"));
  CHECK(read_file(a + "/checkpoint_k2.json") == read_file(b + "/checkpoint_k2.json"));
  CHECK(read_file(a + "/manifest.json") == read_file(b + "/manifest.json"));

  // A different seed changes the trace.
  const std::string c = dir / "c";
  REQUIRE(run_cli("fit --config " + cfg + " --out " + c + " --seed 99").code == 0);
  CHECK(read_file(a + "/trace.csv") != read_file(c + "/trace.csv"));
}

TEST_CASE("thread count overrides leave the artifacts untouched") {
  TempDir dir;
  const std::string cfg = dir / "run.ini";
  write_file(cfg, quick_gaussian_config(1));
  const std::string a = dir / "a";
  const std::string b = dir / "b";
  REQUIRE(run_cli("fit --config " + cfg + " --out " + a).code == 0);
  REQUIRE(run_cli("fit --config " + cfg + " --out " + b, "CMGVA_THREADS=3").code == 0);
  CHECK(read_file(a + "/trace.csv") == read_file(b + "/trace.csv"));
}

TEST_CASE("a bimodal problem scores two components above one" * doctest::timeout(300)) {
  TempDir dir;
  const std::string cfg = dir / "run.ini";
  write_file(cfg,
             "[target]\n"
             "kind = mixnormal\n"
             "modes = -2 0 ; 2 0\n"
             "rho = 0\n"
             "[boost]\n"
             "sample_count = 50\n"
             "iters_first = 4000\n"
             "iters_per_component = 4000\n"
             "max_components = 2\n"
             "r_first = 2\n"
             "seed = 21\n");
  const std::string out = dir / "run";
  REQUIRE(run_cli("fit --config " + cfg + " --out " + out).code == 0);
  const auto summary = parse_csv(read_file(out + "/summary.csv"));
  REQUIRE(summary.size() == 3);
  CHECK(parse_double(summary[2][1]) > parse_double(summary[1][1]));
}

TEST_CASE("comparison modes restrict the approximation family") {
  TempDir dir;
  const std::string cfg = dir / "run.ini";
  write_file(cfg, quick_gaussian_config(3));

  const std::string gc = dir / "gc";
  REQUIRE(run_cli("fit --config " + cfg + " --out " + gc + " --mode gcopula").code == 0);
  // Single component regardless of the configured budget.
  CHECK(parse_csv(read_file(gc + "/summary.csv")).size() == 2);
  CHECK(!fs::exists(gc + "/checkpoint_k2.json"));

  const std::string mn = dir / "mn";
  REQUIRE(run_cli("fit --config " + cfg + " --out " + mn + " --mode mixnorm").code == 0);
  const CmgvaState st = load_state(mn + "/checkpoint_k3.json");
  CHECK(st.yj.gamma() == Eigen::VectorXd::Ones(4));
}

TEST_CASE("config mistakes exit with code 2 and a line-anchored message") {
  TempDir dir;
  const std::string cfg = dir / "run.ini";
  write_file(cfg,
             "[target]\n"
             "kind = gaussian\n"
             "dim = 4\n"
             "typo_key = 1\n");
  const CmdResult res = run_cli("fit --config " + cfg + " --out " + (dir / "run"));
  CHECK(res.code == 2);
  CHECK(res.err.find(cfg + ":4:") != std::string::npos);
  CHECK(res.err.find("typo_key") != std::string::npos);

  const CmdResult missing = run_cli("fit --config " + (dir / "absent.ini"));
  CHECK(missing.code == 2);

  const CmdResult badflag = run_cli("fit");
  CHECK(badflag.code == 2);
}

TEST_CASE("a second run into a locked directory is refused") {
  TempDir dir;
  const std::string cfg = dir / "run.ini";
  write_file(cfg, quick_gaussian_config(1));
  const std::string out = dir / "run";
  fs::create_directories(out);
  write_file(out + "/.cmgva.lock", "");
  const CmdResult res = run_cli("fit --config " + cfg + " --out " + out);
  CHECK(res.code == 2);
  CHECK(res.err.find("lock") != std::string::npos);
}

TEST_CASE("sampling zero draws writes just the header") {
  TempDir dir;
  const CmgvaState st = single_state_gauss(Eigen::Vector2d(0.0, 0.0),
                                           Eigen::MatrixXd::Zero(2, 1),
                                           Eigen::Vector2d(1.0, 1.0));
  const std::string ck = dir / "state.json";
  save_state(st, ck);
  const std::string out = dir / "samples.csv";
  REQUIRE(run_cli("sample --checkpoint " + ck + " --n 0 --out " + out).code == 0);
  CHECK(read_file(out) == "theta_1,theta_2\n");
}

TEST_CASE("sample means match the mixture's analytic mean" * doctest::timeout(120)) {
  TempDir dir;
  CmgvaState st{YjVector(Eigen::Vector2d(1.0, 1.0)),
                {Component{Eigen::Vector2d(1.0, 0.0), Eigen::MatrixXd::Zero(2, 1),
                           Eigen::Vector2d(0.6, 0.8)},
                 Component{Eigen::Vector2d(-1.0, 2.0), Eigen::MatrixXd::Zero(2, 1),
                           Eigen::Vector2d(0.5, 0.7)}},
                (Eigen::VectorXd(2) << 0.3, 0.7).finished(),
                0};
  const std::string ck = dir / "state.json";
  save_state(st, ck);
  const std::string out = dir / "samples.csv";
  REQUIRE(run_cli("sample --checkpoint " + ck + " --n 100000 --out " + out + " --seed 12").code ==
          0);

  const auto rows = parse_csv(read_file(out));
  REQUIRE(rows.size() == 100001);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    sum[0] += parse_double(rows[i][0]);
    sum[1] += parse_double(rows[i][1]);
  }
  const Eigen::Vector2d mean = sum / 1e5;
  // With the identity transform the theta mean is the weighted phi mean.
  const Eigen::Vector2d expect(0.3 * 1.0 + 0.7 * -1.0, 0.3 * 0.0 + 0.7 * 2.0);
  // Four standard errors of the per-coordinate mixture spread.
  CHECK(std::abs(mean[0] - expect[0]) < 4.0 * std::sqrt(1.123 / 1e5));
  CHECK(std::abs(mean[1] - expect[1]) < 4.0 * std::sqrt(1.375 / 1e5));
}

TEST_CASE("sampling is seed reproducible and seed sensitive") {
  TempDir dir;
  Rng make(3);
  const CmgvaState st = random_state(3, 2, 1, make);
  const std::string ck = dir / "state.json";
  save_state(st, ck);
  const std::string a = dir / "a.csv";
  const std::string b = dir / "b.csv";
  const std::string c = dir / "c.csv";
  REQUIRE(run_cli("sample --checkpoint " + ck + " --n 50 --out " + a + " --seed 7").code == 0);
  REQUIRE(run_cli("sample --checkpoint " + ck + " --n 50 --out " + b + " --seed 7").code == 0);
  REQUIRE(run_cli("sample --checkpoint " + ck + " --n 50 --out " + c + " --seed 8").code == 0);
  CHECK(read_file(a) == read_file(b));
  CHECK(read_file(a) != read_file(c));
}

TEST_CASE("the marginal grid matches direct marginal evaluations") {
  TempDir dir;
  CmgvaState st = single_state(Eigen::Vector2d(0.4, -0.2),
                               (Eigen::MatrixXd(2, 1) << 0.3, 0.1).finished(),
                               Eigen::Vector2d(0.9, 1.2), Eigen::Vector2d(0.7, 1.3));
  const std::string ck = dir / "state.json";
  save_state(st, ck);
  const std::string out = dir / "samples.csv";
  const std::string grid = dir / "grid.csv";
  REQUIRE(run_cli("sample --checkpoint " + ck + " --n 0 --out " + out + " --grid " + grid +
                  " --grid-points 11").code == 0);

  const auto rows = parse_csv(read_file(grid));
  REQUIRE(rows.size() == 1 + 2 * 11);
  CHECK(rows[0] == std::vector<std::string>{"coord", "theta", "log_marginal"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const int coord = static_cast<int>(parse_double(rows[i][0]));
    const double theta = parse_double(rows[i][1]);
    const double logm = parse_double(rows[i][2]);
    CHECK(logm == marginal_log_density(coord - 1, theta, st));
  }
}

TEST_CASE("a corrupt checkpoint is an input error") {
  TempDir dir;
  const std::string ck = dir / "broken.json";
  write_file(ck, "{ not json");
  const CmdResult res = run_cli("sample --checkpoint " + ck + " --n 1 --out " + (dir / "x.csv"));
  CHECK(res.code == 2);
}

TEST_CASE("pps on a perfectly fitted linear model is the pure noise term") {
  TempDir dir;
  // y depends exactly linearly on two covariates.
  std::string train = "x1,x2,y\n";
  std::string test = "x1,x2,y\n";
  for (int i = 0; i < 8; ++i) {
    const double x1 = 0.25 * i - 1.0, x2 = 0.5 - 0.125 * i;
    const double y = 2.0 + 1.0 * x1 - 0.5 * x2;
    ((i % 2) ? test : train) += shortest(x1) + "," + shortest(x2) + "," + shortest(y) + "\n";
  }
  write_file(dir / "train.csv", train);
  write_file(dir / "test.csv", test);
  write_file(dir / "run.ini",
             "[target]\n"
             "kind = linear\n"
             "data = train.csv\n"
             "response = y\n"
             "interactions = false\n");

  // Point-mass approximation at the exact coefficients, unit noise variance.
  Eigen::VectorXd mu(4);
  mu << 2.0, 1.0, -0.5, 0.0;
  const CmgvaState st = single_state_gauss(mu, Eigen::MatrixXd::Zero(4, 1),
                                           Eigen::VectorXd::Constant(4, 1e-6));
  const std::string ck = dir / "state.json";
  save_state(st, ck);

  const std::string out = dir / "pps.csv";
  const CmdResult res = run_cli("pps --checkpoint " + ck + " --config " + (dir / "run.ini") +
                                " --test " + (dir / "test.csv") + " --out " + out +
                                " --draws 2000 --seed 5");
  REQUIRE(res.code == 0);
  REQUIRE(res.out.substr(0, 4) == "pps ");
  const double pps = parse_double(res.out.substr(4, res.out.find('\n') - 4));
  CHECK(pps == doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-6));

  const auto rows = parse_csv(read_file(out));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"n_test", "draws", "pps"});
  CHECK(rows[1][0] == "4");
  CHECK(parse_double(rows[1][2]) == pps);
}

TEST_CASE("a frozen seeded pps run is reproducible through the public api") {
  TempDir dir;
  std::string train = "u,v,y\n";
  std::string test = "u,v,y\n";
  Rng gen(40);
  for (int i = 0; i < 12; ++i) {
    const double u = gen.normal(), v = gen.normal();
    const double y = 1.0 + 0.8 * u - 1.2 * v + 0.3 * gen.normal();
    ((i % 3 == 0) ? test : train) += shortest(u) + "," + shortest(v) + "," + shortest(y) + "\n";
  }
  write_file(dir / "train.csv", train);
  write_file(dir / "test.csv", test);
  write_file(dir / "run.ini",
             "[target]\n"
             "kind = linear\n"
             "data = train.csv\n"
             "response = y\n");

  Rng make(41);
  CmgvaState st = random_state(4, 2, 1, make);
  const std::string ck = dir / "state.json";
  save_state(st, ck);

  const CmdResult res = run_cli("pps --checkpoint " + ck + " --config " + (dir / "run.ini") +
                                " --test " + (dir / "test.csv") + " --draws 4000 --seed 5");
  REQUIRE(res.code == 0);
  const double got = parse_double(res.out.substr(4, res.out.find('\n') - 4));

  // Replicate the command's estimate from the library with the same seed.
  Dataset test_data = read_csv_dataset(dir / "test.csv", "y");
  Eigen::MatrixXd design(test_data.x.rows(), 3);
  design.col(0).setOnes();
  design.rightCols(2) = test_data.x;
  Dataset train_data = read_csv_dataset(dir / "train.csv", "y");
  Eigen::MatrixXd train_design(train_data.x.rows(), 3);
  train_design.col(0).setOnes();
  train_design.rightCols(2) = train_data.x;
  const auto model = make_linear_target(train_design, train_data.y);

  Rng rng(5);
  const MixtureEvaluator eval(st);
  Eigen::VectorXd theta_hat = Eigen::VectorXd::Zero(st.dim());
  for (int s = 0; s < 4000; ++s) theta_hat += eval.sample(rng).theta;
  theta_hat /= 4000.0;
  const double want = posterior_predictive_score(*model, design, test_data.y, theta_hat);
  CHECK(got == want);

  // Same command again: bitwise identical output.
  const CmdResult rerun = run_cli("pps --checkpoint " + ck + " --config " + (dir / "run.ini") +
                                  " --test " + (dir / "test.csv") + " --draws 4000 --seed 5");
  CHECK(rerun.out == res.out);
}

TEST_CASE("pps rejects a test csv without the response column, naming it") {
  TempDir dir;
  write_file(dir / "train.csv", "x1,y\n1,2\n2,3\n");
  write_file(dir / "bad.csv", "x1,z\n1,2\n");
  write_file(dir / "run.ini",
             "[target]\nkind = linear\ndata = train.csv\nresponse = y\n");
  const CmgvaState st = single_state_gauss(Eigen::Vector3d::Zero(),
                                           Eigen::MatrixXd::Zero(3, 1),
                                           Eigen::Vector3d::Ones());
  save_state(st, dir / "state.json");

  const CmdResult res = run_cli("pps --checkpoint " + (dir / "state.json") + " --config " +
                                (dir / "run.ini") + " --test " + (dir / "bad.csv"));
  CHECK(res.code == 2);
  CHECK(res.err.find("'y'") != std::string::npos);
}

TEST_CASE("pps rejects a test csv whose covariates differ from training") {
  TempDir dir;
  write_file(dir / "train.csv", "x1,x2,y\n1,0,2\n2,1,3\n");
  write_file(dir / "bad.csv", "x1,other,y\n1,0,2\n");
  write_file(dir / "run.ini",
             "[target]\nkind = linear\ndata = train.csv\nresponse = y\n");
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(4);
  const CmgvaState st = single_state_gauss(mu, Eigen::MatrixXd::Zero(4, 1),
                                           Eigen::VectorXd::Ones(4));
  save_state(st, dir / "state.json");

  const CmdResult res = run_cli("pps --checkpoint " + (dir / "state.json") + " --config " +
                                (dir / "run.ini") + " --test " + (dir / "bad.csv"));
  CHECK(res.code == 2);
  CHECK(res.err.find("schema") != std::string::npos);
}

TEST_SUITE_END();
