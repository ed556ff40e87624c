#pragma once

// File formats of the regdif command-line tool: headed CSV for data,
// JSON for parameters, reports, records and manifests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "regdif/dataset.hpp"
#include "regdif/em.hpp"
#include "regdif/inference.hpp"
#include "regdif/simulation.hpp"

namespace regdif::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Bad input file or configuration; the message names the file and line.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

/// %.17g, "NA" for NaN.
std::string format_number(double value);

Table read_csv(const fs::path& path);
void write_csv(const fs::path& path, const Table& table);

/// responses.csv (0/1 only) and covariates.csv; covariate names come from the header.
Dataset read_dataset(const fs::path& responses, const fs::path& covariates);
void write_dataset(const fs::path& dir, const Dataset& data);

std::string sha256_file(const fs::path& path);

Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& value);

/// NaN becomes null and back.
Json number_or_null(double value);
double number_from(const Json& value);

Json params_to_json(const ParamVector& params, const ParamLayout& layout);
ParamVector params_from_json(const Json& object, const ParamLayout& layout);

Json fit_to_json(const FitResult& fit, const ParamLayout& layout, const EmConfig& config);
FitResult fit_from_json(const Json& doc, ParamLayout* layout = nullptr, EmConfig* config = nullptr);

Json truth_to_json(const TrueModel& truth);

struct TestTarget {
  std::string target;  // item{j} or a coordinate name
  std::string method;  // dscore or wald
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::vector<std::string> coordinates;
  std::vector<double> estimate;
  std::vector<double> debiased;  // NaN for wald
  std::vector<double> se;
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<std::string> warnings;

  friend bool operator==(const TestTarget&, const TestTarget&) = default;
};

Json target_to_json(const TestTarget& t);
TestTarget target_from_json(const Json& j);

Json record_to_json(const ReplicationRecord& record, const ParamLayout& layout);
ReplicationRecord record_from_json(const Json& j, const ParamLayout& layout);

/// Study configuration file; unknown keys are rejected.
StudyConfig study_config_from_json(const Json& doc);
Json study_config_to_json(const StudyConfig& config);

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const fs::path& path);

struct Manifest {
  std::string command;
  Json config;
  std::optional<std::uint64_t> seed;  // null for commands without randomness
  double wall_clock_seconds = 0.0;
  std::vector<fs::path> inputs;
};

/// Writes manifest.json into `dir` with SHA-256 digests of the inputs.
void write_manifest(const fs::path& dir, const Manifest& manifest);

}  // namespace regdif::io
