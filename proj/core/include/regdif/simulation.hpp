#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regdif/em.hpp"
#include "regdif/params.hpp"

namespace regdif {

enum class DifCondition { kNone = 0, kQuarter = 25, kHalf = 50 };

int dif_percent(DifCondition condition);
/// Accepts 0, 25 or 50; throws std::invalid_argument otherwise.
DifCondition dif_condition_from_percent(int percent);

/// Data-generating model of the simulation study (12 items, covariates
/// age, gender, product).
struct TrueModel {
  ParamVector params;
  DifCondition condition = DifCondition::kNone;

  static TrueModel standard(DifCondition condition);
  /// 0-based items whose DIF block is nonzero.
  std::vector<Eigen::Index> dif_items() const;
};

using Rng = std::mt19937_64;

/// Columns (age, gender, product): gender ~ Bern(0.5), age ~ N(0.2 * gender, 1),
/// product = age * gender.
Eigen::MatrixXd generate_covariates(Eigen::Index n, Rng& rng);

struct SimulatedResponses {
  Eigen::MatrixXd responses;
  Eigen::VectorXd theta;
};

/// theta_i ~ N(gamma'x_i, exp(delta'x_i)), then independent Bernoulli draws.
SimulatedResponses simulate_responses(const Eigen::MatrixXd& covariates, const ParamVector& truth,
                                      Rng& rng);
Eigen::MatrixXd generate_responses(const Eigen::MatrixXd& covariates, const TrueModel& truth,
                                   Rng& rng);

enum class Method { kRegDif, kRefit, kDscore, kOracle };

std::string method_name(Method method);
Method method_from_name(const std::string& name);
const std::vector<Method>& all_methods();

/// Default lambda constants c (lambda = c / sqrt(n)) per DIF condition.
std::map<DifCondition, double> default_lambda_constants();

struct StudyConfig {
  std::vector<int> sample_sizes{500};
  std::vector<DifCondition> conditions{DifCondition::kNone};
  int replications = 1;
  std::uint64_t seed = 1;
  std::vector<Method> methods = all_methods();
  std::map<DifCondition, double> lambda_constants = default_lambda_constants();
  /// When set, replaces the lambda rule for every condition.
  std::optional<double> lambda_override;
  EmConfig em;
  double alpha = 0.05;
  std::vector<Eigen::Index> oracle_anchors{10, 11};
  int jobs = 1;

  void validate() const;
  bool uses(Method method) const;
};

struct MethodRecord {
  Method method = Method::kRegDif;
  bool ok = false;
  std::string error;
  std::vector<int> flagged;       // per item: 1 flagged, 0 not flagged, -1 not tested
  std::vector<double> p_values;   // NaN when the method yields no p-value
  Eigen::VectorXd estimates;      // flattened, NaN when unavailable
  Eigen::VectorXd standard_errors;
  int em_iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

struct ReplicationRecord {
  int n = 0;
  DifCondition condition = DifCondition::kNone;
  int replication = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::vector<MethodRecord> methods;

  const MethodRecord* find(Method method) const;
};

/// Counter-based stream split: splitmix64 applied successively to the root
/// seed xor-ed with n, the DIF percentage and the replication index.
std::uint64_t replication_seed(std::uint64_t root, int n, DifCondition condition, int replication);

/// One simulated dataset analysed by every configured method.
ReplicationRecord run_replication(const StudyConfig& config, int n, DifCondition condition,
                                  int replication);
/// Same, on caller-supplied data (used when the dataset is built elsewhere).
ReplicationRecord analyse_replication(const StudyConfig& config, const Dataset& data,
                                      DifCondition condition, double lambda);

struct MetricRow {
  std::string method;
  int n = 0;
  int dif_condition = 0;
  std::string target;  // item{j} or a coordinate name
  std::string metric;
  double value = 0.0;  // NaN marks an unavailable cell
  int n_effective = 0;
};

/// Item rates (type1_error / power / type2_error / false_detection) and
/// coordinate metrics (bias, variance, se_recovery, se_recovery_zero_filled).
std::vector<MetricRow> aggregate_metrics(const StudyConfig& config,
                                         const std::vector<ReplicationRecord>& records);

/// sqrt(mean(se^2)) / sd(estimates); NaN when fewer than two values or zero spread.
double se_recovery_ratio(const std::vector<double>& estimates, const std::vector<double>& ses);

struct StudyResult {
  std::vector<ReplicationRecord> records;  // ordered by (n, condition, replication)
  std::vector<MetricRow> metrics;
  int failures = 0;  // method records with ok == false
};

using ProgressFn = std::function<void(const ReplicationRecord&)>;

/// Replications run on `config.jobs` workers; outputs do not depend on it.
StudyResult run_study(const StudyConfig& config, const ProgressFn& progress = {});

}  // namespace regdif
