#include "regdif/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace regdif {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

BfgsResult minimize_bfgs(const Objective& fn, Eigen::VectorXd x0, const BfgsOptions& options) {
  const Eigen::Index dim = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  Eigen::VectorXd grad(dim);
  res.value = fn(res.x, &grad);
  if (!std::isfinite(res.value)) throw std::invalid_argument("minimize_bfgs: f(x0) not finite");

  Eigen::MatrixXd inv_hess = Eigen::MatrixXd::Identity(dim, dim);
  if (options.inverse_hessian.rows() == dim && options.inverse_hessian.cols() == dim)
    inv_hess = options.inverse_hessian;
  Eigen::VectorXd new_grad(dim);
  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    if (dim == 0 || grad.lpNorm<Eigen::Infinity>() < options.gradient_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -inv_hess * grad;
    double slope = grad.dot(dir);
    if (slope >= 0.0) {
      inv_hess.setIdentity();
      dir = -grad;
      slope = -grad.squaredNorm();
    }
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    double trial_value = 0.0;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      trial = res.x + step * dir;
      trial_value = fn(trial, &new_grad);
      if (std::isfinite(trial_value) && trial_value <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Eigen::VectorXd s = trial - res.x;
    const Eigen::VectorXd y = new_grad - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
      inv_hess = (eye - rho * s * y.transpose()) * inv_hess * (eye - rho * y * s.transpose()) +
                 rho * s * s.transpose();
    }
    // a decrease at the roundoff level of f: the tolerance is below what f can resolve
    const bool stalled =
        res.value - trial_value <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(res.value);
    res.x = std::move(trial);
    res.value = trial_value;
    grad = new_grad;
    if (stalled) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged && grad.lpNorm<Eigen::Infinity>() < options.gradient_tol) res.converged = true;
  res.inverse_hessian = std::move(inv_hess);
  return res;
}

QuadraticL1Result minimize_quadratic_l1(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                        const Eigen::VectorXd& penalty,
                                        const std::vector<bool>& fixed_zero,
                                        Eigen::VectorXd start, double tol, int max_sweeps) {
  const Eigen::Index dim = b.size();
  if (a.rows() != dim || a.cols() != dim || penalty.size() != dim || start.size() != dim)
    throw std::invalid_argument("minimize_quadratic_l1: dimension mismatch");
  if (!fixed_zero.empty() && static_cast<Eigen::Index>(fixed_zero.size()) != dim)
    throw std::invalid_argument("minimize_quadratic_l1: fixed_zero mask has wrong length");

  QuadraticL1Result res;
  res.x = std::move(start);
  for (Eigen::Index k = 0; k < dim; ++k) {
    const bool fixed = !fixed_zero.empty() && fixed_zero[k];
    if (fixed) res.x[k] = 0.0;
    if (!fixed && !(a(k, k) > 0.0)) {
      res.x[k] = 0.0;
      res.degenerate.push_back(k);
    }
  }
  // Running gradient of the smooth part: A x - b.
  Eigen::VectorXd grad = a * res.x - b;
  for (res.sweeps = 0; res.sweeps < max_sweeps; ++res.sweeps) {
    double max_change = 0.0;
    for (Eigen::Index k = 0; k < dim; ++k) {
      if (!fixed_zero.empty() && fixed_zero[k]) continue;
      const double akk = a(k, k);
      if (!(akk > 0.0)) continue;
      const double z = akk * res.x[k] - grad[k];
      const double updated = soft_threshold(z, penalty[k]) / akk;
      const double delta = updated - res.x[k];
      if (delta != 0.0) {
        grad.noalias() += a.col(k) * delta;
        res.x[k] = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < tol) {
      res.converged = true;
      ++res.sweeps;
      break;
    }
  }
  return res;
}

}  // namespace regdif
