#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace regdif {

/// sign(z) * max(|z| - t, 0).
double soft_threshold(double z, double t);

/// Objective returning f(x); fills *grad when it is non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  double gradient_tol = 1e-6;  // on the max-norm of the gradient
  int max_iter = 500;
  Eigen::MatrixXd inverse_hessian;  // starting approximation; empty means identity
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd inverse_hessian;  // final approximation, reusable as a warm start
};

/// Quasi-Newton minimization with Armijo backtracking. Every accepted step
/// decreases f, so the returned value never exceeds f(x0). Also reports
/// convergence when an accepted step changes f only at roundoff level.
BfgsResult minimize_bfgs(const Objective& fn, Eigen::VectorXd x0, const BfgsOptions& options = {});

struct QuadraticL1Result {
  Eigen::VectorXd x;
  int sweeps = 0;
  bool converged = false;
  std::vector<Eigen::Index> degenerate;  // coordinates with a zero diagonal, held at 0
};

/// Cyclic coordinate descent for
///   min_x  0.5 x'Ax - b'x + sum_k penalty_k |x_k|
/// with A symmetric positive semidefinite. Coordinates flagged in
/// `fixed_zero` (may be empty) stay at 0. Stops when the largest coordinate
/// change in a sweep is below `tol`.
QuadraticL1Result minimize_quadratic_l1(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                        const Eigen::VectorXd& penalty,
                                        const std::vector<bool>& fixed_zero,
                                        Eigen::VectorXd start, double tol, int max_sweeps);

}  // namespace regdif
