#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <string>

#include "io.hpp"
#include "regdif/distributions.hpp"
#include "regdif/errors.hpp"
#include "regdif/inference.hpp"
#include "regdif/simulation.hpp"

namespace regdif::cli {

namespace {

using io::InputError;
using io::Json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void prepare_dir(const fs::path& dir) {
  if (dir.empty()) throw InputError("an output directory is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw InputError("cannot create output directory " + dir.string() +
                     (ec ? ": " + ec.message() : ""));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Json em_snapshot(const EmConfig& c) {
  Json j;
  j["quadrature_nodes"] = c.quadrature_nodes;
  j["em_tol"] = c.em_tol;
  j["mstep_tol"] = c.mstep_tol;
  j["max_iter"] = c.max_iter;
  return j;
}

std::vector<std::string> names_of(const ParamLayout& layout, const std::vector<Eigen::Index>& idx) {
  std::vector<std::string> out;
  for (Eigen::Index k : idx) out.push_back(layout.name(k));
  return out;
}

Eigen::Index item_index(int item, const ParamLayout& layout) {
  if (item < 1 || item > layout.num_items())
    throw InputError("item " + std::to_string(item) + " is out of range 1.." +
                     std::to_string(layout.num_items()));
  return item - 1;
}

io::TestTarget dscore_target(const InferenceContext& ctx, const Dataset& data,
                             const FocalSpec& focal, const std::string& target, double lambda_prime,
                             double alpha) {
  const DscoreReport test = dscore_test(ctx, data, focal, lambda_prime);
  const DebiasReport deb = one_step_debias(ctx, focal, lambda_prime, alpha);
  io::TestTarget t;
  t.target = target;
  t.method = "dscore";
  t.statistic = test.statistic;
  t.df = test.df;
  t.p_value = test.p_value;
  t.coordinates = names_of(ctx.layout, focal.indices);
  for (Eigen::Index m = 0; m < focal.size(); ++m) {
    t.estimate.push_back(deb.estimate[m]);
    t.debiased.push_back(deb.debiased[m]);
    t.se.push_back(deb.se[m]);
    t.ci_lower.push_back(deb.ci_lower[m]);
    t.ci_upper.push_back(deb.ci_upper[m]);
  }
  t.warnings = test.warnings;
  t.warnings.insert(t.warnings.end(), deb.warnings.begin(), deb.warnings.end());
  return t;
}

io::TestTarget wald_target(const InferenceContext& ctx, const std::vector<Eigen::Index>& tested,
                           const Eigen::VectorXd& se, const std::string& target, double alpha) {
  const WaldReport w = wald_test(ctx, tested, target);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  io::TestTarget t;
  t.target = target;
  t.method = "wald";
  t.statistic = w.statistic;
  t.df = w.df;
  t.p_value = w.p_value;
  t.coordinates = names_of(ctx.layout, tested);
  for (Eigen::Index k : tested) {
    t.estimate.push_back(ctx.estimate[k]);
    t.debiased.push_back(kNaN);
    t.se.push_back(se[k]);
    t.ci_lower.push_back(ctx.estimate[k] - z * se[k]);
    t.ci_upper.push_back(ctx.estimate[k] + z * se[k]);
  }
  return t;
}

}  // namespace

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("REGDIF_SEED");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw InputError(std::string("REGDIF_SEED is not an integer: '") + env + "'");
  return v;
}

void cmd_generate(const GenerateOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  if (o.n < 1) throw InputError("--n must be at least 1");
  DifCondition cond;
  try {
    cond = dif_condition_from_percent(o.dif_condition);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  prepare_dir(o.out_dir);
  const std::uint64_t seed = seed_from_env(o.seed);
  Rng rng(seed);
  const TrueModel truth = TrueModel::standard(cond);
  Eigen::MatrixXd x = generate_covariates(o.n, rng);
  Eigen::MatrixXd y = generate_responses(x, truth, rng);
  const Dataset data(std::move(y), std::move(x), {"age", "gender", "product"});
  io::write_dataset(o.out_dir, data);
  io::write_json(o.out_dir / "truth.json", io::truth_to_json(truth));

  io::Manifest m;
  m.command = "generate";
  m.config = {{"n", o.n}, {"dif_condition", o.dif_condition}};
  m.seed = seed;
  m.wall_clock_seconds = seconds_since(t0);
  io::write_manifest(o.out_dir, m);
}

void cmd_fit(const FitOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  if (o.lambda && o.lambda_constant) throw InputError("give either --lambda or --lambda-c, not both");
  if (!o.lambda && !o.lambda_constant) throw InputError("one of --lambda or --lambda-c is required");
  try {
    o.em.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  const Dataset data = io::read_dataset(o.responses, o.covariates);
  prepare_dir(o.out_dir);
  const ParamLayout layout(data.num_items(), data.covariate_names());
  const double lambda = o.lambda ? *o.lambda : select_lambda(data.num_persons(), *o.lambda_constant);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and >= 0");

  PenaltyConfig penalty = PenaltyConfig::lasso(layout, lambda);
  for (int a : o.anchors) penalty.fix_zero(layout.dif_indices(item_index(a, layout)));
  std::vector<Eigen::Index> fixed;
  for (const auto& name : o.fix_zero) {
    try {
      fixed.push_back(layout.index_of(name));
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  }
  penalty.fix_zero(fixed);
  try {
    penalty.validate(layout);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  const FitResult fit = penalized_em_fit(data, penalty, o.em);
  io::write_json(o.out_dir / "fit.json", io::fit_to_json(fit, layout, o.em));
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
  if (!fit.converged) std::cerr << "warning: EM stopped at max_iter without meeting em_tol\n";

  io::Manifest m;
  m.command = "fit";
  m.config = em_snapshot(o.em);
  m.config["lambda"] = lambda;
  m.config["anchors"] = o.anchors;
  m.config["fix_zero"] = o.fix_zero;
  m.wall_clock_seconds = seconds_since(t0);
  m.inputs = {o.responses, o.covariates};
  io::write_manifest(o.out_dir, m);
}

void cmd_test(const TestOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  if (o.method != "dscore" && o.method != "wald")
    throw InputError("--method must be dscore or wald, got '" + o.method + "'");
  if (o.items.empty() && o.coordinates.empty())
    throw InputError("give at least one --item or --coord");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw InputError("--alpha must lie in (0, 1)");
  ParamLayout layout(0, 0);
  EmConfig em;
  FitResult fit = io::fit_from_json(io::read_json(o.fit), &layout, &em);
  const Dataset data = io::read_dataset(o.responses, o.covariates);
  if (data.num_items() != layout.num_items() || data.covariate_names() != layout.covariate_names())
    throw InputError("data (" + std::to_string(data.num_items()) + " items, " +
                     std::to_string(data.num_covariates()) + " covariates) do not match " +
                     o.fit.string() + " (" + std::to_string(layout.num_items()) + " items, " +
                     std::to_string(layout.num_covariates()) + " covariates)");
  prepare_dir(o.out_dir);
  const double lambda_prime = o.lambda_prime.value_or(fit.lambda);

  const InferenceContext ctx = prepare_inference(fit, data);
  Eigen::VectorXd wald_se;
  if (o.method == "wald") wald_se = wald_standard_errors(ctx);

  Json targets = Json::array();
  auto run = [&](const std::string& label, const FocalSpec& focal) {
    if (o.method == "dscore") {
      targets.push_back(io::target_to_json(dscore_target(ctx, data, focal, label, lambda_prime, o.alpha)));
      return;
    }
    std::vector<Eigen::Index> tested;
    for (Eigen::Index k : focal.indices)
      if (!fit.penalty.fixed_zero[k]) tested.push_back(k);
    if (tested.empty()) throw InputError(label + ": every coordinate is fixed at 0; nothing to test");
    targets.push_back(io::target_to_json(wald_target(ctx, tested, wald_se, label, o.alpha)));
  };
  try {
    for (int item : o.items)
      run("item" + std::to_string(item), FocalSpec::item_dif(layout, item_index(item, layout)));
    for (const auto& name : o.coordinates) run(name, FocalSpec::coordinate(layout, layout.index_of(name)));
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  Json report;
  report["format"] = "regdif-report";
  report["method"] = o.method;
  report["alpha"] = o.alpha;
  report["lambda"] = fit.lambda;
  report["lambda_prime"] = lambda_prime;
  report["n"] = data.num_persons();
  report["targets"] = targets;
  io::write_json(o.out_dir / "report.json", report);

  io::Manifest m;
  m.command = "test";
  m.config = {{"method", o.method}, {"alpha", o.alpha}, {"lambda_prime", lambda_prime},
              {"items", o.items}, {"coordinates", o.coordinates}};
  m.wall_clock_seconds = seconds_since(t0);
  m.inputs = {o.fit, o.responses, o.covariates};
  io::write_manifest(o.out_dir, m);
}

int cmd_simulate(const SimulateOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  StudyConfig config = io::study_config_from_json(io::read_json(o.config));
  config.seed = o.seed ? *o.seed : seed_from_env(config.seed);
  if (o.jobs < 1) throw InputError("--jobs must be at least 1");
  config.jobs = o.jobs;
  prepare_dir(o.out_dir);
  const fs::path records_dir = o.out_dir / "records";
  prepare_dir(records_dir);

  const std::size_t total =
      config.sample_sizes.size() * config.conditions.size() * static_cast<std::size_t>(config.replications);
  std::size_t done = 0;
  ProgressFn progress;
  if (!o.quiet) {
    progress = [&](const ReplicationRecord& r) {
      ++done;
      std::cerr << "[" << done << "/" << total << "] n=" << r.n
                << " dif=" << dif_percent(r.condition) << "% rep=" << r.replication + 1 << '\n';
    };
  }
  const StudyResult result = run_study(config, progress);

  const ParamLayout layout(12, {"age", "gender", "product"});
  for (const ReplicationRecord& r : result.records) {
    char name[96];
    std::snprintf(name, sizeof name, "n%d_dif%d_rep%04d.json", r.n, dif_percent(r.condition),
                  r.replication + 1);
    io::write_json(records_dir / name, io::record_to_json(r, layout));
  }
  io::write_metrics_csv(o.out_dir / "metrics.csv", result.metrics);
  if (result.failures > 0)
    std::cerr << "warning: " << result.failures << " method fit(s) failed; see records/\n";

  io::Manifest m;
  m.command = "simulate";
  m.config = io::study_config_to_json(config);
  m.seed = config.seed;
  m.wall_clock_seconds = seconds_since(t0);
  m.inputs = {o.config};
  io::write_manifest(o.out_dir, m);
  return result.failures;
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

}  // namespace regdif::cli
