#include "regdif/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "regdif/errors.hpp"
#include "regdif/inference.hpp"

namespace regdif {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr Eigen::Index kItems = 12;
constexpr Eigen::Index kCovariates = 3;

struct ItemRow {
  double d, a;
  double beta1[3];
  double beta0[3];
};

// Columns: d, a, beta1 (age, gender, product), beta0 (age, gender, product).
constexpr ItemRow kTable[kItems] = {
    {0.00, 2.00, {0.20, 0.50, 0.20}, {0.20, -0.50, -0.20}},
    {1.20, 1.20, {-0.20, -0.50, 0.00}, {-0.20, 0.25, 0.00}},
    {-0.20, 2.00, {-0.25, 0.25, 0.10}, {-0.15, -0.25, -0.15}},
    {1.50, 1.50, {0.20, -0.50, -0.20}, {0.20, 0.50, 0.20}},
    {1.20, 1.20, {-0.20, -0.50, 0.00}, {-0.20, 0.25, 0.00}},
    {1.10, 1.90, {-0.25, 0.25, -0.10}, {-0.15, -0.25, 0.15}},
    {-1.80, 2.40, {0, 0, 0}, {0, 0, 0}},
    {0.50, 1.50, {0, 0, 0}, {0, 0, 0}},
    {0.60, 1.40, {0, 0, 0}, {0, 0, 0}},
    {-2.00, 1.80, {0, 0, 0}, {0, 0, 0}},
    {0.60, 2.30, {0, 0, 0}, {0, 0, 0}},
    {1.60, 1.80, {0, 0, 0}, {0, 0, 0}},
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double lambda_for(const StudyConfig& config, Eigen::Index n, DifCondition condition) {
  if (config.lambda_override) return *config.lambda_override;
  return select_lambda(n, config.lambda_constants.at(condition));
}

MethodRecord empty_record(Method method, Eigen::Index num_items, Eigen::Index dim) {
  MethodRecord r;
  r.method = method;
  r.flagged.assign(num_items, -1);
  r.p_values.assign(num_items, kNaN);
  r.estimates = Eigen::VectorXd::Constant(dim, kNaN);
  r.standard_errors = Eigen::VectorXd::Constant(dim, kNaN);
  return r;
}

void append(std::vector<std::string>& into, const std::vector<std::string>& from,
            const std::string& prefix = {}) {
  for (const auto& w : from) into.push_back(prefix + w);
}

std::string item_label(Eigen::Index j) { return "item" + std::to_string(j + 1); }

MethodRecord run_regdif(const FitResult& fit, const ParamLayout& layout) {
  MethodRecord r = empty_record(Method::kRegDif, layout.num_items(), layout.dimension());
  const Eigen::VectorXd est = fit.estimate.flatten();
  for (Eigen::Index j = 0; j < layout.num_items(); ++j) {
    int flag = 0;
    for (Eigen::Index k : layout.dif_indices(j))
      if (est[k] != 0.0) flag = 1;
    r.flagged[j] = flag;
  }
  r.estimates = est;
  r.em_iterations = fit.iterations;
  r.converged = fit.converged;
  r.warnings = fit.warnings;
  r.ok = true;
  return r;
}

MethodRecord run_refit(const Dataset& data, const FitResult& penalized, const ParamLayout& layout,
                       const StudyConfig& config) {
  MethodRecord r = empty_record(Method::kRefit, layout.num_items(), layout.dimension());
  const Eigen::VectorXd pen = penalized.estimate.flatten();
  std::vector<Eigen::Index> zeroed;
  for (Eigen::Index k : layout.all_dif_indices())
    if (pen[k] == 0.0) zeroed.push_back(k);
  PenaltyConfig penalty = PenaltyConfig::lasso(layout, 0.0);
  penalty.fix_zero(zeroed);
  EmConfig em = config.em;
  em.start = penalized.estimate;
  const FitResult fit = penalized_em_fit(data, penalty, em);
  r.estimates = fit.estimate.flatten();
  r.em_iterations = fit.iterations;
  r.converged = fit.converged;
  append(r.warnings, fit.warnings);

  const InferenceContext ctx = prepare_inference(fit, data);
  r.standard_errors = wald_standard_errors(ctx);
  for (Eigen::Index j = 0; j < layout.num_items(); ++j) {
    std::vector<Eigen::Index> selected;
    for (Eigen::Index k : layout.dif_indices(j))
      if (!penalty.fixed_zero[k]) selected.push_back(k);
    if (selected.empty()) {
      r.flagged[j] = 0;
      continue;
    }
    const WaldReport w = wald_test(ctx, selected, item_label(j));
    r.p_values[j] = w.p_value;
    r.flagged[j] = w.p_value < config.alpha ? 1 : 0;
  }
  r.ok = true;
  return r;
}

MethodRecord run_dscore(const Dataset& data, const FitResult& fit, const ParamLayout& layout,
                        const StudyConfig& config) {
  MethodRecord r = empty_record(Method::kDscore, layout.num_items(), layout.dimension());
  const InferenceContext ctx = prepare_inference(fit, data);
  const double lambda_prime = fit.lambda;
  for (Eigen::Index j = 0; j < layout.num_items(); ++j) {
    try {
      const DscoreReport t = dscore_test(ctx, data, FocalSpec::item_dif(layout, j), lambda_prime);
      r.p_values[j] = t.p_value;
      r.flagged[j] = t.p_value < config.alpha ? 1 : 0;
      append(r.warnings, t.warnings, item_label(j) + ": ");
    } catch (const NumericalError& e) {
      r.warnings.push_back(item_label(j) + " test failed: " + e.what());
    }
    try {
      const FocalSpec block = FocalSpec::item_block(layout, j);
      const DebiasReport d = one_step_debias(ctx, block, lambda_prime, config.alpha);
      for (Eigen::Index m = 0; m < block.size(); ++m) {
        r.estimates[block.indices[m]] = d.debiased[m];
        r.standard_errors[block.indices[m]] = d.se[m];
      }
    } catch (const NumericalError& e) {
      r.warnings.push_back(item_label(j) + " debiasing failed: " + e.what());
    }
  }
  try {
    const FocalSpec pop = FocalSpec::population(layout);
    const DebiasReport d = one_step_debias(ctx, pop, lambda_prime, config.alpha);
    for (Eigen::Index m = 0; m < pop.size(); ++m) {
      r.estimates[pop.indices[m]] = d.debiased[m];
      r.standard_errors[pop.indices[m]] = d.se[m];
    }
  } catch (const NumericalError& e) {
    r.warnings.push_back(std::string("population debiasing failed: ") + e.what());
  }
  r.em_iterations = fit.iterations;
  r.converged = fit.converged;
  r.ok = true;
  return r;
}

MethodRecord run_oracle(const Dataset& data, const ParamLayout& layout, const StudyConfig& config) {
  MethodRecord r = empty_record(Method::kOracle, layout.num_items(), layout.dimension());
  const FitResult fit =
      penalized_em_fit(data, PenaltyConfig::anchored(layout, config.oracle_anchors), config.em);
  r.estimates = fit.estimate.flatten();
  r.em_iterations = fit.iterations;
  r.converged = fit.converged;
  append(r.warnings, fit.warnings);
  const InferenceContext ctx = prepare_inference(fit, data);
  r.standard_errors = wald_standard_errors(ctx);
  for (Eigen::Index j = 0; j < layout.num_items(); ++j) {
    if (std::find(config.oracle_anchors.begin(), config.oracle_anchors.end(), j) !=
        config.oracle_anchors.end())
      continue;
    const WaldReport w = wald_test(ctx, layout.dif_indices(j), item_label(j));
    r.p_values[j] = w.p_value;
    r.flagged[j] = w.p_value < config.alpha ? 1 : 0;
  }
  r.ok = true;
  return r;
}

template <class Fn>
MethodRecord guarded(Method method, Eigen::Index num_items, Eigen::Index dim, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    MethodRecord r = empty_record(method, num_items, dim);
    r.error = e.what();
    return r;
  }
}

}  // namespace

int dif_percent(DifCondition condition) { return static_cast<int>(condition); }

DifCondition dif_condition_from_percent(int percent) {
  switch (percent) {
    case 0: return DifCondition::kNone;
    case 25: return DifCondition::kQuarter;
    case 50: return DifCondition::kHalf;
    default:
      throw std::invalid_argument("DIF condition must be 0, 25 or 50 (got " +
                                  std::to_string(percent) + ")");
  }
}

TrueModel TrueModel::standard(DifCondition condition) {
  TrueModel m;
  m.condition = condition;
  m.params = ParamVector::neutral(kItems, kCovariates);
  const Eigen::Index dif_count = condition == DifCondition::kHalf      ? 6
                                 : condition == DifCondition::kQuarter ? 3
                                                                       : 0;
  for (Eigen::Index j = 0; j < kItems; ++j) {
    ItemParams& it = m.params.items[j];
    it.slope = kTable[j].a;
    it.intercept = kTable[j].d;
    if (j < dif_count) {
      for (Eigen::Index k = 0; k < kCovariates; ++k) {
        it.intercept_dif[k] = kTable[j].beta0[k];
        it.slope_dif[k] = kTable[j].beta1[k];
      }
    }
  }
  m.params.population.mean_effects << -0.2, -0.2, -0.2;
  m.params.population.logvar_effects << -0.1, 0.3, 0.1;
  return m;
}

std::vector<Eigen::Index> TrueModel::dif_items() const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < params.num_items(); ++j)
    if (params.items[j].has_dif()) out.push_back(j);
  return out;
}

Eigen::MatrixXd generate_covariates(Eigen::Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("generate_covariates: n must be >= 1");
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double gender = coin(rng) ? 1.0 : 0.0;
    const double age = 0.2 * gender + normal(rng);
    x(i, 0) = age;
    x(i, 1) = gender;
    x(i, 2) = age * gender;
  }
  return x;
}

SimulatedResponses simulate_responses(const Eigen::MatrixXd& covariates, const ParamVector& truth,
                                      Rng& rng) {
  truth.validate();
  if (covariates.cols() != truth.num_covariates())
    throw std::invalid_argument("simulate_responses: covariate count does not match parameters");
  const Eigen::Index n = covariates.rows();
  const Eigen::Index num_items = truth.num_items();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SimulatedResponses out;
  out.responses.resize(n, num_items);
  out.theta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = covariates.row(i).transpose();
    const double mean = truth.population.mean_effects.dot(x);
    const double sd = std::exp(0.5 * truth.population.logvar_effects.dot(x));
    const double theta = mean + sd * normal(rng);
    out.theta[i] = theta;
    for (Eigen::Index j = 0; j < num_items; ++j) {
      const ItemParams& it = truth.items[j];
      const double eta = it.intercept_at(x) + it.slope_at(x) * theta;
      const double p = 1.0 / (1.0 + std::exp(-eta));
      out.responses(i, j) = unif(rng) < p ? 1.0 : 0.0;
    }
  }
  return out;
}

Eigen::MatrixXd generate_responses(const Eigen::MatrixXd& covariates, const TrueModel& truth,
                                   Rng& rng) {
  return simulate_responses(covariates, truth.params, rng).responses;
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kRegDif: return "reg-dif";
    case Method::kRefit: return "refit";
    case Method::kDscore: return "dscore";
    case Method::kOracle: return "oracle";
  }
  throw std::invalid_argument("unknown method");
}

Method method_from_name(const std::string& name) {
  for (Method m : all_methods())
    if (method_name(m) == name) return m;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected reg-dif, refit, dscore or oracle)");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::kRegDif, Method::kRefit, Method::kDscore,
                                           Method::kOracle};
  return methods;
}

std::map<DifCondition, double> default_lambda_constants() {
  return {{DifCondition::kNone, 0.8291},
          {DifCondition::kQuarter, 0.6883},
          {DifCondition::kHalf, 0.5727}};
}

void StudyConfig::validate() const {
  if (sample_sizes.empty()) throw std::invalid_argument("study: no sample sizes");
  for (int n : sample_sizes)
    if (n < 2) throw std::invalid_argument("study: sample sizes must be >= 2");
  if (conditions.empty()) throw std::invalid_argument("study: no DIF conditions");
  if (replications < 1) throw std::invalid_argument("study: replications must be >= 1");
  if (methods.empty()) throw std::invalid_argument("study: no methods");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("study: alpha must lie in (0,1)");
  if (jobs < 1) throw std::invalid_argument("study: jobs must be >= 1");
  if (lambda_override && !(*lambda_override >= 0.0))
    throw std::invalid_argument("study: lambda must be >= 0");
  if (!lambda_override)
    for (DifCondition c : conditions)
      if (!lambda_constants.contains(c))
        throw std::invalid_argument("study: no lambda constant for " +
                                    std::to_string(dif_percent(c)) + "% DIF");
  for (Eigen::Index a : oracle_anchors)
    if (a < 0 || a >= kItems) throw std::invalid_argument("study: oracle anchor out of range");
  if (uses(Method::kOracle) && oracle_anchors.empty())
    throw std::invalid_argument("study: the oracle method needs anchors");
  em.validate();
}

bool StudyConfig::uses(Method method) const {
  return std::find(methods.begin(), methods.end(), method) != methods.end();
}

const MethodRecord* ReplicationRecord::find(Method method) const {
  for (const auto& m : methods)
    if (m.method == method) return &m;
  return nullptr;
}

std::uint64_t replication_seed(std::uint64_t root, int n, DifCondition condition,
                               int replication) {
  std::uint64_t s = splitmix64(root);
  s = splitmix64(s ^ static_cast<std::uint64_t>(n));
  s = splitmix64(s ^ static_cast<std::uint64_t>(dif_percent(condition)));
  return splitmix64(s ^ static_cast<std::uint64_t>(replication));
}

ReplicationRecord analyse_replication(const StudyConfig& config, const Dataset& data,
                                      DifCondition condition, double lambda) {
  const ParamLayout layout(data.num_items(), data.covariate_names());
  const Eigen::Index J = layout.num_items();
  const Eigen::Index dim = layout.dimension();
  ReplicationRecord rec;
  rec.n = static_cast<int>(data.num_persons());
  rec.condition = condition;
  rec.lambda = lambda;

  const bool need_penalized =
      config.uses(Method::kRegDif) || config.uses(Method::kRefit) || config.uses(Method::kDscore);
  std::optional<FitResult> fit;
  std::string fit_error;
  if (need_penalized) {
    try {
      fit = penalized_em_fit(data, PenaltyConfig::lasso(layout, lambda), config.em);
    } catch (const std::exception& e) {
      fit_error = std::string("penalized fit failed: ") + e.what();
    }
  }
  auto needs_fit = [&](Method m, auto&& body) {
    if (!fit) {
      MethodRecord r = empty_record(m, J, dim);
      r.error = fit_error;
      return r;
    }
    return guarded(m, J, dim, body);
  };
  for (Method m : all_methods()) {
    if (!config.uses(m)) continue;
    switch (m) {
      case Method::kRegDif:
        rec.methods.push_back(needs_fit(m, [&] { return run_regdif(*fit, layout); }));
        break;
      case Method::kRefit:
        rec.methods.push_back(needs_fit(m, [&] { return run_refit(data, *fit, layout, config); }));
        break;
      case Method::kDscore:
        rec.methods.push_back(needs_fit(m, [&] { return run_dscore(data, *fit, layout, config); }));
        break;
      case Method::kOracle:
        rec.methods.push_back(guarded(m, J, dim, [&] { return run_oracle(data, layout, config); }));
        break;
    }
  }
  return rec;
}

ReplicationRecord run_replication(const StudyConfig& config, int n, DifCondition condition,
                                  int replication) {
  const std::uint64_t seed = replication_seed(config.seed, n, condition, replication);
  Rng rng(seed);
  const TrueModel truth = TrueModel::standard(condition);
  Eigen::MatrixXd x = generate_covariates(n, rng);
  Eigen::MatrixXd y = generate_responses(x, truth, rng);
  const Dataset data(std::move(y), std::move(x), {"age", "gender", "product"});
  ReplicationRecord rec = analyse_replication(config, data, condition, lambda_for(config, n, condition));
  rec.replication = replication;
  rec.seed = seed;
  return rec;
}

double se_recovery_ratio(const std::vector<double>& estimates, const std::vector<double>& ses) {
  if (estimates.size() < 2 || ses.empty()) return kNaN;
  const double m = static_cast<double>(estimates.size());
  double mean = 0.0;
  for (double v : estimates) mean += v;
  mean /= m;
  double ss = 0.0;
  for (double v : estimates) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (m - 1.0));
  if (!(sd > 0.0)) return kNaN;
  double se2 = 0.0;
  for (double s : ses) se2 += s * s;
  return std::sqrt(se2 / static_cast<double>(ses.size())) / sd;
}

std::vector<MetricRow> aggregate_metrics(const StudyConfig& config,
                                         const std::vector<ReplicationRecord>& records) {
  std::vector<MetricRow> rows;
  for (int n : config.sample_sizes) {
    for (DifCondition cond : config.conditions) {
      const TrueModel truth = TrueModel::standard(cond);
      const ParamLayout layout(kItems, {"age", "gender", "product"});
      const Eigen::VectorXd true_flat = truth.params.flatten();
      const auto dif_items = truth.dif_items();
      std::vector<const ReplicationRecord*> cell;
      for (const auto& r : records)
        if (r.n == n && r.condition == cond) cell.push_back(&r);
      for (Method method : config.methods) {
        const std::string mname = method_name(method);
        auto emit = [&](const std::string& target, const std::string& metric, double value,
                        int count) {
          rows.push_back({mname, n, dif_percent(cond), target, metric, value, count});
        };
        for (Eigen::Index j = 0; j < kItems; ++j) {
          int tested = 0, flagged = 0;
          for (const auto* r : cell) {
            const MethodRecord* mr = r->find(method);
            if (!mr || !mr->ok || mr->flagged[j] < 0) continue;
            ++tested;
            flagged += mr->flagged[j];
          }
          // Items a method never tests (oracle anchors) stay in the table as unavailable.
          const double rate = tested > 0 ? static_cast<double>(flagged) / tested : kNaN;
          const bool is_dif =
              std::find(dif_items.begin(), dif_items.end(), j) != dif_items.end();
          if (cond == DifCondition::kNone) {
            emit(item_label(j), "type1_error", rate, tested);
          } else if (is_dif) {
            emit(item_label(j), "power", rate, tested);
            emit(item_label(j), "type2_error", tested > 0 ? 1.0 - rate : kNaN, tested);
          } else {
            emit(item_label(j), "false_detection", rate, tested);
          }
        }
        for (Eigen::Index k = 0; k < layout.dimension(); ++k) {
          std::vector<double> est, est_with_se, ses, ses_zero;
          for (const auto* r : cell) {
            const MethodRecord* mr = r->find(method);
            if (!mr || !mr->ok || !std::isfinite(mr->estimates[k])) continue;
            est.push_back(mr->estimates[k]);
            const double se = mr->standard_errors[k];
            ses_zero.push_back(std::isfinite(se) ? se : 0.0);
            if (std::isfinite(se)) {
              est_with_se.push_back(mr->estimates[k]);
              ses.push_back(se);
            }
          }
          const std::string target = layout.name(k);
          const int count = static_cast<int>(est.size());
          if (count == 0) continue;
          double mean = 0.0;
          for (double v : est) mean += v;
          mean /= count;
          double var = kNaN;
          if (count >= 2) {
            double ss = 0.0;
            for (double v : est) ss += (v - mean) * (v - mean);
            var = ss / (count - 1);
          }
          emit(target, "bias", mean - true_flat[k], count);
          emit(target, "variance", var, count);
          if (method == Method::kRegDif) continue;
          emit(target, "se_recovery", se_recovery_ratio(est_with_se, ses),
               static_cast<int>(ses.size()));
          if (ses.size() < est.size())
            emit(target, "se_recovery_zero_filled", se_recovery_ratio(est, ses_zero), count);
        }
      }
    }
  }
  return rows;
}

StudyResult run_study(const StudyConfig& config, const ProgressFn& progress) {
  config.validate();
  struct Task {
    int n;
    DifCondition cond;
    int rep;
  };
  std::vector<Task> tasks;
  for (int n : config.sample_sizes)
    for (DifCondition c : config.conditions)
      for (int r = 0; r < config.replications; ++r) tasks.push_back({n, c, r});

  StudyResult out;
  out.records.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      out.records[t] = run_replication(config, tasks[t].n, tasks[t].cond, tasks[t].rep);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(out.records[t]);
      }
    }
  };
  const int workers = std::min<int>(config.jobs, static_cast<int>(tasks.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& r : out.records)
    for (const auto& m : r.methods)
      if (!m.ok) ++out.failures;
  out.metrics = aggregate_metrics(config, out.records);
  return out;
}

}  // namespace regdif
