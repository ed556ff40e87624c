#pragma once

#include <functional>

#include <Eigen/Dense>

#include "regdif/dataset.hpp"
#include "regdif/params.hpp"
#include "regdif/quadrature.hpp"

namespace regdif {

/// P(Y=1 | theta, x) = 1 / (1 + exp(-(d + beta0'x) - (a + beta1'x) theta)).
/// Throws std::invalid_argument on non-finite input or a length mismatch.
double irf_probability(double theta, const Eigen::Ref<const Eigen::VectorXd>& x,
                       const ItemParams& item);

/// log f(y_i | x_i) for every person, evaluated on `grid` in log space.
/// The grid must have been built from params.population.
Eigen::VectorXd person_loglik(const ParamVector& params, const Dataset& data,
                              const QuadratureGrid& grid);

/// Average marginal log-likelihood l_n = (1/n) sum_i log f(y_i | x_i).
double marginal_loglik(const ParamVector& params, const Dataset& data,
                       const QuadratureGrid& grid);

struct ScoreResult {
  Eigen::VectorXd gradient;    // gradient of the loss -l_n
  Eigen::MatrixXd per_person;  // n x d, row i = gradient of -log f(y_i | x_i)
};

/// Exact derivative of the quadrature approximation of -l_n, including the
/// movement of the person-specific nodes with gamma and delta.
ScoreResult score_vector(const ParamVector& params, const Dataset& data,
                         const QuadratureGrid& grid);

/// Same gradient as score_vector without materializing the per-person rows.
Eigen::VectorXd loss_gradient(const ParamVector& params, const Dataset& data,
                              const QuadratureGrid& grid);

struct PopulationLoss {
  double value = 0.0;        // -l_n
  Eigen::VectorXd gradient;  // d(-l_n) / d(gamma, delta), length 2K
};

/// -l_n and its (gamma, delta) block in one pass, nodes moving with the
/// population parameters.
PopulationLoss population_loss(const ParamVector& params, const Dataset& data,
                               const QuadratureGrid& grid);

/// Central-difference Jacobian of `fn` at `x`.
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                            const Eigen::VectorXd& x, double step);

inline constexpr double kHessianStep = 1e-5;

/// Hessian of -l_n: central-difference Jacobian of the analytic gradient,
/// symmetrized. Nodes are rebuilt from grid.rule() at every perturbed point.
/// Throws NumericalError naming the coordinate of a non-finite entry.
Eigen::MatrixXd observed_information(const ParamVector& params, const Dataset& data,
                                     const QuadratureGrid& grid,
                                     double step = kHessianStep);

}  // namespace regdif
