#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regdif/dataset.hpp"
#include "regdif/em.hpp"
#include "regdif/params.hpp"
#include "regdif/quadrature.hpp"

namespace regdif {

/// Focal coordinates psi of the flattened parameter; the remaining free
/// coordinates are the nuisance eta.
struct FocalSpec {
  std::vector<Eigen::Index> indices;
  std::string label;

  /// beta0_j and beta1_j (d0 = 2K): the item-level DIF hypothesis.
  static FocalSpec item_dif(const ParamLayout& layout, Eigen::Index item);
  /// (a_j, d_j, beta0_j, beta1_j): the per-item debiasing block.
  static FocalSpec item_block(const ParamLayout& layout, Eigen::Index item);
  /// (gamma, delta).
  static FocalSpec population(const ParamLayout& layout);
  static FocalSpec coordinate(const ParamLayout& layout, Eigen::Index index);

  Eigen::Index size() const { return static_cast<Eigen::Index>(indices.size()); }
  /// Throws std::invalid_argument on duplicates, out-of-range indices or d0 = 0.
  void validate(Eigen::Index dimension) const;
};

/// Quantities evaluated once at a fitted estimate and shared by every test
/// drawn from that fit.
struct InferenceContext {
  ParamLayout layout{0, 0};
  Eigen::VectorXd estimate;
  std::vector<bool> fixed_zero;  // coordinates that are constants, not parameters
  Eigen::Index num_persons = 0;
  HermiteRule rule;
  Eigen::VectorXd gradient;       // gradient of -l_n at the estimate
  Eigen::MatrixXd score_rows;     // n x d per-person loss gradients
  Eigen::MatrixXd score_gram;     // (1/n) rows' rows
  Eigen::MatrixXd hessian;        // observed information

  std::vector<Eigen::Index> nuisance(const FocalSpec& focal) const;
};

InferenceContext prepare_inference(const FitResult& fit, const Dataset& data);

struct ProjectionEstimate {
  Eigen::MatrixXd w;  // d0 x d1; row m holds the nuisance coefficients of focal m
  std::vector<std::string> warnings;
  bool converged = true;
};

inline constexpr double kProjectionTol = 1e-8;

/// Row m minimizes (1/2n) sum_i (g_i[psi_m] - w' g_i[eta])^2 + lambda' ||w||_1,
/// expressed through the Gram matrix (1/n) G'G of the per-person gradients.
ProjectionEstimate estimate_w(const Eigen::MatrixXd& score_gram,
                              const std::vector<Eigen::Index>& focal,
                              const std::vector<Eigen::Index>& nuisance, double lambda_prime);
ProjectionEstimate estimate_w(const InferenceContext& ctx, const FocalSpec& focal,
                              double lambda_prime);

/// s = grad_psi - W grad_eta.
Eigen::VectorXd decorrelated_score(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& w,
                                   const std::vector<Eigen::Index>& focal,
                                   const std::vector<Eigen::Index>& nuisance);
/// Evaluates the loss gradient at `params` and projects it.
Eigen::VectorXd decorrelated_score(const ParamVector& params, const Eigen::MatrixXd& w,
                                   const Dataset& data, const FocalSpec& focal,
                                   const std::vector<Eigen::Index>& nuisance,
                                   const HermiteRule& rule);

inline constexpr double kMaxConditionNumber = 1e10;

/// H_psipsi - W H_etapsi, symmetrized.
Eigen::MatrixXd efficient_information(const Eigen::MatrixXd& hessian, const Eigen::MatrixXd& w,
                                      const std::vector<Eigen::Index>& focal,
                                      const std::vector<Eigen::Index>& nuisance);

/// Inverse of a symmetric positive-definite matrix; throws
/// SingularInformationError mentioning `label` when it is not positive
/// definite or its condition number exceeds kMaxConditionNumber.
Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info, const std::string& label);

struct DscoreReport {
  std::string label;
  std::vector<Eigen::Index> focal;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  Eigen::MatrixXd w;
  Eigen::VectorXd score_at_null;
  Eigen::MatrixXd efficient_info;
  std::vector<std::string> warnings;
};

/// T = n s(0, eta_hat)' I_{psi|eta}^{-1} s(0, eta_hat), p from chi^2_{d0}.
DscoreReport dscore_test(const InferenceContext& ctx, const Dataset& data, const FocalSpec& focal,
                         double lambda_prime);
DscoreReport dscore_test(const FitResult& fit, const Dataset& data, const FocalSpec& focal,
                         double lambda_prime);

struct DebiasReport {
  std::string label;
  std::vector<Eigen::Index> focal;
  Eigen::VectorXd estimate;  // psi_hat
  Eigen::VectorXd debiased;  // psi_tilde
  Eigen::VectorXd se;
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
  double alpha = 0.05;
  std::vector<std::string> warnings;
};

/// psi_tilde = psi_hat - I^{-1} s, se_m = sqrt([I^{-1}]_mm / n), normal CI.
DebiasReport one_step_from_score(const Eigen::VectorXd& psi_hat, const Eigen::VectorXd& score,
                                 const Eigen::MatrixXd& efficient_info, Eigen::Index n,
                                 double alpha, const std::string& label = {});
DebiasReport one_step_debias(const InferenceContext& ctx, const FocalSpec& focal,
                             double lambda_prime, double alpha);
DebiasReport one_step_debias(const FitResult& fit, const Dataset& data, const FocalSpec& focal,
                             double lambda_prime, double alpha);

struct WaldReport {
  std::string label;
  std::vector<Eigen::Index> tested;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// Standard errors sqrt(diag(H_free^{-1}) / n) over the free coordinates;
/// NaN marks fixed coordinates. Throws SingularInformationError.
Eigen::VectorXd wald_standard_errors(const InferenceContext& ctx);

/// T = n b' [V_tt]^{-1} b with V = H_free^{-1}; every tested index must be free.
WaldReport wald_test(const InferenceContext& ctx, const std::vector<Eigen::Index>& tested,
                     const std::string& label = {});

/// Fits the model with the DIF blocks of `anchors` fixed at zero (lambda = 0)
/// and Wald-tests the DIF block of `target_item` (df = 2K).
WaldReport wald_test_oracle(const Dataset& data, const std::vector<Eigen::Index>& anchors,
                            Eigen::Index target_item, const EmConfig& config);

}  // namespace regdif
