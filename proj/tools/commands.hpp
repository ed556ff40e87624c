#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "regdif/em.hpp"

namespace regdif::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsageError = 1, kNumericalFailure = 2 };

struct GenerateOptions {
  int n = 500;
  int dif_condition = 0;
  std::uint64_t seed = 1;
  fs::path out_dir;
};

struct FitOptions {
  fs::path responses;
  fs::path covariates;
  std::optional<double> lambda;
  std::optional<double> lambda_constant;  // lambda = c / sqrt(n)
  std::vector<int> anchors;               // 1-based items with DIF fixed at 0
  std::vector<std::string> fix_zero;      // coordinate names
  EmConfig em;
  fs::path out_dir;
};

struct TestOptions {
  fs::path fit;
  fs::path responses;
  fs::path covariates;
  std::vector<int> items;  // 1-based
  std::vector<std::string> coordinates;
  std::string method = "dscore";  // dscore or wald
  std::optional<double> lambda_prime;  // defaults to the fit's lambda
  double alpha = 0.05;
  fs::path out_dir;
};

struct SimulateOptions {
  fs::path config;
  fs::path out_dir;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

/// REGDIF_SEED when set and parseable, otherwise `fallback`.
std::uint64_t seed_from_env(std::uint64_t fallback);

/// Each command writes its files plus manifest.json into out_dir. Errors
/// propagate as exceptions; run_guarded maps them to exit codes.
void cmd_generate(const GenerateOptions& options);
void cmd_fit(const FitOptions& options);
void cmd_test(const TestOptions& options);
/// Returns the number of failed method records.
int cmd_simulate(const SimulateOptions& options);

/// Runs `body`, printing any error to stderr: input/usage problems give 1,
/// numerical failures give 2.
int run_guarded(const std::function<void()>& body);

}  // namespace regdif::cli
