#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regdif/dataset.hpp"
#include "regdif/params.hpp"
#include "regdif/quadrature.hpp"

namespace regdif {

/// L1 penalty support and equality constraints over the flattened parameter.
struct PenaltyConfig {
  double lambda = 0.0;
  std::vector<bool> penalized;   // true exactly on penalized DIF coordinates
  std::vector<bool> fixed_zero;  // coordinates held at 0

  /// Penalize every beta0/beta1 coordinate with `lambda`; nothing fixed.
  static PenaltyConfig lasso(const ParamLayout& layout, double lambda);
  /// lambda = 0 with the DIF blocks of `anchor_items` (0-based) fixed at 0.
  static PenaltyConfig anchored(const ParamLayout& layout,
                                const std::vector<Eigen::Index>& anchor_items);

  /// Moves `indices` from the penalized set into the fixed-zero set.
  PenaltyConfig& fix_zero(const std::vector<Eigen::Index>& indices);

  /// Throws std::invalid_argument when a mask has the wrong length, the
  /// penalty touches a non-DIF coordinate, the masks overlap, or lambda < 0.
  void validate(const ParamLayout& layout) const;

  std::vector<Eigen::Index> free_indices() const;
  double penalty_value(const Eigen::VectorXd& flat) const;
};

/// kFixedNode: BFGS on the posterior moments at the current nodes. Cheap,
/// but its fixed point misses stationarity of the adaptive-quadrature loss by
/// an amount that shrinks with the number of nodes.
/// kMarginal: fixed-node iterations until the tolerance is met, then
/// iterations whose population step minimizes the adaptive-quadrature loss
/// directly (items held fixed) until it is met again.
enum class PopulationStep { kMarginal, kFixedNode };

struct EmConfig {
  int max_iter = 500;
  double em_tol = 1e-4;     // on the change of the penalized loss
  double mstep_tol = 1e-6;  // coordinate change (items) / gradient norm (population)
  int quadrature_nodes = 49;
  int max_irls = 50;
  double clamp_limit = 10.0;  // |a_j|, |d_j| bound for degenerate items
  PopulationStep population_step = PopulationStep::kMarginal;
  std::optional<ParamVector> start;

  void validate() const;
};

struct FitResult {
  ParamVector estimate;
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // penalized loss p_n, trace[0] at the start values
  double final_loss = 0.0;
  PenaltyConfig penalty;
  int quadrature_nodes = 49;
  std::vector<std::string> warnings;
};

struct EStep {
  Eigen::MatrixXd weights;  // n x Q posterior weights e_iq
  double loglik = 0.0;      // average marginal log-likelihood at the same parameters
};

/// Posterior node weights e_iq, computed in log space; rows sum to 1.
/// Throws NumericalError naming the person whose log terms are all -inf.
EStep e_step(const ParamVector& params, const Dataset& data, const QuadratureGrid& grid);
Eigen::MatrixXd posterior_weights(const ParamVector& params, const Dataset& data,
                                  const QuadratureGrid& grid);

struct PopulationUpdate {
  PopulationParams population;
  double objective_start = 0.0;
  double objective_end = 0.0;
  bool converged = false;
};

/// -(1/n) sum_i sum_q e_iq log phi(theta_iq | gamma'x_i, exp(delta'x_i)).
double population_objective(const Eigen::MatrixXd& weights, const Dataset& data,
                            const QuadratureGrid& grid, const PopulationParams& pop);

/// Minimizes population_objective by BFGS to gradient max-norm < tol.
/// `fixed_zero` (gamma then delta, may be empty) pins coordinates at 0.
PopulationUpdate m_step_population(const Eigen::MatrixXd& weights, const Dataset& data,
                                   const QuadratureGrid& grid, const PopulationParams& start,
                                   double tol, const std::vector<bool>& fixed_zero = {});

/// Minimizes -l_n over (gamma, delta) with the items of `params` held fixed,
/// rebuilding the person-specific nodes at every trial point. When given,
/// `inverse_hessian` seeds BFGS and receives its final approximation.
PopulationUpdate m_step_population_marginal(const ParamVector& params, const Dataset& data,
                                            const HermiteRule& rule, double tol,
                                            const std::vector<bool>& fixed_zero = {},
                                            Eigen::MatrixXd* inverse_hessian = nullptr);

/// Per-item view of PenaltyConfig, in item order (a, d, beta0, beta1).
struct ItemConstraint {
  std::vector<bool> penalized;
  std::vector<bool> fixed_zero;

  static ItemConstraint from(const PenaltyConfig& penalty, const ParamLayout& layout,
                             Eigen::Index item);
  /// Penalize the DIF coordinates, fix nothing.
  static ItemConstraint lasso(Eigen::Index num_covariates);
};

struct ItemUpdate {
  ItemParams item;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

/// -(1/n) sum_i sum_q e_iq log f_j(y_ij | theta_iq) + lambda * sum_{penalized} |xi_k|.
double item_objective(const Eigen::MatrixXd& weights, const Dataset& data,
                      const QuadratureGrid& grid, Eigen::Index item, double lambda,
                      const ItemParams& params, const ItemConstraint& constraint);

/// Gradient of the smooth part of item_objective, in item order.
Eigen::VectorXd item_objective_gradient(const Eigen::MatrixXd& weights, const Dataset& data,
                                        const QuadratureGrid& grid, Eigen::Index item,
                                        const ItemParams& params);

/// IRLS outer loop with cyclic coordinate descent on each quadratic model;
/// soft-thresholding on penalized coordinates, exact updates on the rest,
/// step-halving whenever the penalized objective would increase.
ItemUpdate m_step_item(const Eigen::MatrixXd& weights, const Dataset& data,
                       const QuadratureGrid& grid, Eigen::Index item, double lambda,
                       const ItemParams& start, double tol, const ItemConstraint& constraint,
                       int max_irls = 50);

/// -l_n + lambda * ||penalized coordinates||_1.
double penalized_loss(const ParamVector& params, const Dataset& data, const QuadratureGrid& grid,
                      const PenaltyConfig& penalty);

/// Bock-Aitkin EM on the L1-penalized loss.
FitResult penalized_em_fit(const Dataset& data, const PenaltyConfig& penalty,
                           const EmConfig& config);

/// lambda = c * sqrt(1/n).
double select_lambda(Eigen::Index n, double c);

}  // namespace regdif
