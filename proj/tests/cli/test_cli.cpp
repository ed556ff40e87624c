#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "io.hpp"
#include "regdif/distributions.hpp"
#include "regdif/errors.hpp"

using namespace regdif;
using namespace regdif::cli;
namespace io = regdif::io;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "regdif_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(REGDIF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

// One generated dataset reused by the fit/test cases.
const fs::path& shared_data() {
  static const fs::path dir = [] {
    const fs::path d = scratch("shared");
    cmd_generate({.n = 300, .dif_condition = 25, .seed = 5, .out_dir = d});
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("generate: row count, determinism, truth file") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  cmd_generate({.n = 10, .dif_condition = 25, .seed = 42, .out_dir = a});
  cmd_generate({.n = 10, .dif_condition = 25, .seed = 42, .out_dir = b});
  CHECK(line_count(a / "responses.csv") == 11);
  CHECK(line_count(a / "covariates.csv") == 11);
  CHECK(slurp(a / "covariates.csv").rfind("age,gender,product\n", 0) == 0);
  CHECK(slurp(a / "responses.csv").rfind("item_1,item_2,", 0) == 0);
  CHECK(io::sha256_file(a / "responses.csv") == io::sha256_file(b / "responses.csv"));
  CHECK(io::sha256_file(a / "covariates.csv") == io::sha256_file(b / "covariates.csv"));

  const io::Json truth = io::read_json(a / "truth.json");
  for (int item = 4; item <= 6; ++item)
    for (const char* block : {"beta0", "beta1"})
      for (const char* cov : {"age", "gender", "product"}) {
        const std::string name = "item" + std::to_string(item) + "_" + block + "_" + cov;
        CHECK(truth["params"][name].get<double>() == 0.0);
      }
  CHECK(truth["dif_items"] == io::Json::array({1, 2, 3}));

  const io::Json manifest = io::read_json(a / "manifest.json");
  CHECK(manifest["command"] == "generate");
  CHECK(manifest["seed"] == 42);
}

TEST_CASE("REGDIF_SEED overrides the seed") {
  const fs::path a = scratch("env_a"), b = scratch("env_b");
  ::setenv("REGDIF_SEED", "77", 1);
  cmd_generate({.n = 20, .dif_condition = 0, .seed = 1, .out_dir = a});
  ::unsetenv("REGDIF_SEED");
  cmd_generate({.n = 20, .dif_condition = 0, .seed = 77, .out_dir = b});
  CHECK(slurp(a / "responses.csv") == slurp(b / "responses.csv"));
  CHECK(io::read_json(a / "manifest.json")["seed"] == 77);
  ::setenv("REGDIF_SEED", "abc", 1);
  CHECK_THROWS_AS(seed_from_env(1), io::InputError);
  ::unsetenv("REGDIF_SEED");
}

TEST_CASE("fit: total shrinkage, anchors, descent, manifest digests") {
  const fs::path data = shared_data();
  FitOptions o;
  o.responses = data / "responses.csv";
  o.covariates = data / "covariates.csv";

  SUBCASE("huge lambda zeroes every DIF coordinate") {
    o.lambda = 1e6;
    o.out_dir = scratch("fit_huge");
    cmd_fit(o);
    const io::Json fit = io::read_json(o.out_dir / "fit.json");
    int count = 0;
    for (const auto& [name, value] : fit["estimate"].items()) {
      if (name.find("_beta0_") != std::string::npos || name.find("_beta1_") != std::string::npos) {
        CHECK(value.get<double>() == 0.0);
        ++count;
      }
    }
    CHECK(count == 72);
  }
  SUBCASE("anchored oracle fit") {
    o.lambda = 0.0;
    o.anchors = {11, 12};
    o.out_dir = scratch("fit_anchor");
    cmd_fit(o);
    const io::Json fit = io::read_json(o.out_dir / "fit.json");
    CHECK(fit["fixed_zero"].size() == 12);
    for (const auto& name : fit["fixed_zero"]) {
      const std::string s = name.get<std::string>();
      CHECK((s.rfind("item11_", 0) == 0 || s.rfind("item12_", 0) == 0));
    }
    const auto trace = fit["trace"].get<std::vector<double>>();
    for (std::size_t r = 1; r < trace.size(); ++r) CHECK(trace[r] <= trace[r - 1] + 1e-8);
  }
  SUBCASE("lambda rule and manifest") {
    o.lambda_constant = 0.6883;
    o.out_dir = scratch("fit_rule");
    cmd_fit(o);
    const io::Json fit = io::read_json(o.out_dir / "fit.json");
    CHECK(fit["lambda"].get<double>() == doctest::Approx(0.6883 / std::sqrt(300.0)));
    const io::Json m = io::read_json(o.out_dir / "manifest.json");
    CHECK(m["inputs"].size() == 2);
    CHECK(m["inputs"][0]["sha256"] == io::sha256_file(o.responses));
    CHECK(m["seed"].is_null());
  }
  SUBCASE("option errors") {
    o.out_dir = scratch("fit_err");
    CHECK_THROWS_AS(cmd_fit(o), io::InputError);
    o.lambda = 0.1;
    o.lambda_constant = 0.5;
    CHECK_THROWS_AS(cmd_fit(o), io::InputError);
    o.lambda_constant.reset();
    o.fix_zero = {"item1_beta0_height"};
    CHECK_THROWS_AS(cmd_fit(o), io::InputError);
  }
}

TEST_CASE("test: item and coordinate reports") {
  const fs::path data = shared_data();
  FitOptions f;
  f.responses = data / "responses.csv";
  f.covariates = data / "covariates.csv";
  f.lambda_constant = 0.6883;
  f.out_dir = scratch("test_fit");
  cmd_fit(f);

  TestOptions t;
  t.fit = f.out_dir / "fit.json";
  t.responses = f.responses;
  t.covariates = f.covariates;
  t.items = {1, 8};
  t.coordinates = {"item3_beta1_gender"};
  t.out_dir = scratch("test_report");
  cmd_test(t);
  const io::Json report = io::read_json(t.out_dir / "report.json");
  REQUIRE(report["targets"].size() == 3);
  for (int k = 0; k < 2; ++k) {
    const io::TestTarget tt = io::target_from_json(report["targets"][k]);
    CHECK(tt.df == 6);
    CHECK(tt.coordinates.size() == 6);
    CHECK(tt.p_value == doctest::Approx(chi_square_sf(tt.statistic, 6)));
    for (std::size_t m = 0; m < 6; ++m) {
      CHECK(tt.se[m] > 0.0);
      CHECK(tt.ci_lower[m] < tt.debiased[m]);
      CHECK(tt.debiased[m] < tt.ci_upper[m]);
    }
  }
  const io::TestTarget single = io::target_from_json(report["targets"][2]);
  CHECK(single.target == "item3_beta1_gender");
  CHECK(single.df == 1);
  CHECK(single.coordinates == std::vector<std::string>{"item3_beta1_gender"});
  CHECK(chi_square_sf(12.5916, 6) == doctest::Approx(0.050).epsilon(1e-3));

  SUBCASE("wald on an anchored fit") {
    FitOptions g = f;
    g.lambda_constant.reset();
    g.lambda = 0.0;
    g.anchors = {11, 12};
    g.out_dir = scratch("test_oracle_fit");
    cmd_fit(g);
    TestOptions w = t;
    w.fit = g.out_dir / "fit.json";
    w.method = "wald";
    w.items = {2};
    w.coordinates.clear();
    w.out_dir = scratch("test_wald");
    cmd_test(w);
    const io::TestTarget tt = io::target_from_json(io::read_json(w.out_dir / "report.json")["targets"][0]);
    CHECK(tt.method == "wald");
    CHECK(tt.df == 6);
    CHECK(std::isnan(tt.debiased[0]));
    w.items = {11};
    CHECK_THROWS_AS(cmd_test(w), io::InputError);
  }
  SUBCASE("bad targets") {
    t.items = {13};
    CHECK_THROWS_AS(cmd_test(t), io::InputError);
    t.items.clear();
    t.coordinates = {"nonsense"};
    CHECK_THROWS_AS(cmd_test(t), io::InputError);
  }
}

TEST_CASE("simulate: file counts, schema, byte-identical reruns") {
  const fs::path dir = scratch("sim");
  io::write_json(dir / "study.json",
                 io::Json{{"sample_sizes", {300}}, {"dif_conditions", {0}}, {"replications", 2},
                          {"seed", 9}, {"quadrature_nodes", 21}});
  SimulateOptions o;
  o.config = dir / "study.json";
  o.out_dir = dir / "run1";
  o.jobs = 1;
  o.quiet = true;
  CHECK(cmd_simulate(o) == 0);
  o.out_dir = dir / "run2";
  o.jobs = 3;
  cmd_simulate(o);

  int files = 0;
  for (const auto& e : fs::directory_iterator(dir / "run1" / "records")) {
    ++files;
    CHECK(slurp(e.path()) == slurp(dir / "run2" / "records" / e.path().filename()));
  }
  CHECK(files == 2);
  CHECK(slurp(dir / "run1" / "metrics.csv") == slurp(dir / "run2" / "metrics.csv"));

  int manifests = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "run1"))
    if (e.path().filename() == "manifest.json") ++manifests;
  CHECK(manifests == 1);

  const auto rows = io::read_metrics_csv(dir / "run1" / "metrics.csv");
  for (const char* method : {"reg-dif", "refit", "dscore", "oracle"}) {
    int type1 = 0;
    for (const auto& r : rows)
      if (r.method == method && r.metric == "type1_error") ++type1;
    CHECK(type1 == 12);
  }

  // the records parse back into the in-memory form
  const ParamLayout layout(12, {"age", "gender", "product"});
  const io::Json j = io::read_json(dir / "run1" / "records" / "n300_dif0_rep0001.json");
  const ReplicationRecord rec = io::record_from_json(j, layout);
  CHECK(rec.methods.size() == 4);
  CHECK(io::record_to_json(rec, layout).dump() == j.dump());

  SUBCASE("configuration errors") {
    io::write_json(dir / "bad.json", io::Json{{"replications", 0}});
    o.config = dir / "bad.json";
    CHECK_THROWS_AS(cmd_simulate(o), io::InputError);
    io::write_json(dir / "bad.json", io::Json{{"replicates", 2}});
    CHECK_THROWS_AS(cmd_simulate(o), io::InputError);
    io::write_json(dir / "bad.json", io::Json{{"dif_conditions", {30}}});
    CHECK_THROWS_AS(cmd_simulate(o), io::InputError);
  }
}

TEST_CASE("round trips") {
  SUBCASE("csv table with NA") {
    const fs::path dir = scratch("rt_csv");
    io::Table t{{"a", "b"}, Eigen::MatrixXd(2, 2)};
    t.values << 0.1, 1.0 / 3.0, std::numeric_limits<double>::quiet_NaN(), -2e-300;
    io::write_csv(dir / "t.csv", t);
    const io::Table back = io::read_csv(dir / "t.csv");
    CHECK(back.header == t.header);
    CHECK(back.values(0, 1) == t.values(0, 1));
    CHECK(std::isnan(back.values(1, 0)));
    CHECK(back.values(1, 1) == t.values(1, 1));
  }
  SUBCASE("fit file") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0.0, 1.0);
    const ParamLayout layout(3, {"u", "v"});
    Eigen::VectorXd flat(layout.dimension());
    for (Eigen::Index k = 0; k < flat.size(); ++k) flat[k] = z(rng);
    FitResult fit;
    fit.estimate = ParamVector::unflatten(flat, layout);
    fit.penalty = PenaltyConfig::anchored(layout, {2});
    fit.lambda = 0.0;
    fit.trace = {3.0, 2.5, 2.4999999999999996};
    fit.final_loss = fit.trace.back();
    fit.iterations = 2;
    fit.converged = true;
    fit.warnings = {"w"};
    EmConfig cfg;
    cfg.quadrature_nodes = 21;
    const io::Json j = io::fit_to_json(fit, layout, cfg);
    ParamLayout layout_back(0, 0);
    EmConfig cfg_back;
    const FitResult back = io::fit_from_json(io::Json::parse(j.dump()), &layout_back, &cfg_back);
    CHECK(layout_back == layout);
    CHECK(back.estimate.flatten() == flat);
    CHECK(back.penalty.fixed_zero == fit.penalty.fixed_zero);
    CHECK(back.penalty.penalized == fit.penalty.penalized);
    CHECK(back.trace == fit.trace);
    CHECK(cfg_back.quadrature_nodes == 21);
    CHECK(io::fit_to_json(back, layout_back, cfg_back) == j);
  }
  SUBCASE("report target") {
    io::TestTarget t;
    t.target = "item2";
    t.method = "wald";
    t.statistic = 1.25;
    t.df = 2;
    t.p_value = 0.535;
    t.coordinates = {"x", "y"};
    t.estimate = {0.1, -0.2};
    t.debiased = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    t.se = {0.3, 0.4};
    t.ci_lower = {-0.5, -1.0};
    t.ci_upper = {0.7, 0.6};
    const io::TestTarget back = io::target_from_json(io::Json::parse(io::target_to_json(t).dump()));
    CHECK(io::target_to_json(back) == io::target_to_json(t));
    CHECK(back.se == t.se);
  }
  SUBCASE("study config") {
    StudyConfig c;
    c.sample_sizes = {500, 2500};
    c.conditions = {DifCondition::kHalf};
    c.replications = 7;
    c.seed = 123456789012345ULL;
    c.methods = {Method::kDscore};
    c.lambda_override = 0.02;
    const io::Json j = io::study_config_to_json(c);
    CHECK(io::study_config_to_json(io::study_config_from_json(j)) == j);
  }
  SUBCASE("metrics csv") {
    const fs::path dir = scratch("rt_metrics");
    std::vector<MetricRow> rows{{"dscore", 500, 25, "item1", "power", 0.123456789012345678, 99},
                                {"refit", 500, 25, "item1_beta0_age", "se_recovery",
                                 std::numeric_limits<double>::quiet_NaN(), 0}};
    io::write_metrics_csv(dir / "m.csv", rows);
    const auto back = io::read_metrics_csv(dir / "m.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].value == rows[0].value);
    CHECK(back[0].target == "item1");
    CHECK(std::isnan(back[1].value));
    CHECK(back[1].n_effective == 0);
  }
}

TEST_CASE("input errors name the file and line") {
  const fs::path dir = scratch("bad_input");
  {
    std::ofstream(dir / "y.csv") << "item_1,item_2\n0,1\n1,2\n";
    std::ofstream(dir / "x.csv") << "age\n0.5\n0.1\n";
  }
  try {
    io::read_dataset(dir / "y.csv", dir / "x.csv");
    FAIL("expected an error");
  } catch (const io::InputError& e) {
    CHECK(std::string(e.what()).find("y.csv:3") != std::string::npos);
  }
  {
    std::ofstream(dir / "y.csv") << "item_1,item_2\n0,1\n1,0\n";
    std::ofstream(dir / "x.csv") << "age\n0.5\nabc\n";
  }
  try {
    io::read_dataset(dir / "y.csv", dir / "x.csv");
    FAIL("expected an error");
  } catch (const io::InputError& e) {
    CHECK(std::string(e.what()).find("x.csv:3") != std::string::npos);
  }
  {
    std::ofstream(dir / "x.csv") << "age\n0.5\n";
  }
  try {
    io::read_dataset(dir / "y.csv", dir / "x.csv");
    FAIL("expected an error");
  } catch (const io::InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2 rows x 2 columns") != std::string::npos);
    CHECK(msg.find("1 rows x 1 columns") != std::string::npos);
  }
}

TEST_CASE("exit codes") {
  CHECK(run_guarded([] {}) == 0);
  CHECK(run_guarded([] { throw io::InputError("x"); }) == 1);
  CHECK(run_guarded([] { throw std::invalid_argument("x"); }) == 1);
  CHECK(run_guarded([] { throw SingularInformationError("item3: singular"); }) == 2);
  CHECK(run_guarded([] { throw NumericalError("x"); }) == 2);

  const fs::path data = shared_data();
  CHECK(run_binary("") == 1);
  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("generate --n 5") == 1);
  CHECK(run_binary("generate --n 5 --condition 30 --out " + scratch("exit_gen").string()) == 1);
  CHECK(run_binary("fit --responses " + (data / "responses.csv").string() + " --covariates " +
                   (data / "covariates.csv").string() + " --out " + scratch("exit_fit").string()) ==
        1);
  CHECK(run_binary("generate --n 5 --out " + scratch("exit_ok").string()) == 0);
}
