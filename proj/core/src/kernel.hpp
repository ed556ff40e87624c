#pragma once

// Per-person quadrature kernel shared by the likelihood, score and E-step.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "regdif/dataset.hpp"
#include "regdif/params.hpp"
#include "regdif/quadrature.hpp"

namespace regdif::detail {

/// alpha_j(x_i) and beta_j(x_i) for every person and item (n x J).
struct ItemPredictors {
  Eigen::MatrixXd intercepts;
  Eigen::MatrixXd slopes;
};

inline ItemPredictors item_predictors(const ParamVector& params, const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index num_items = params.num_items();
  ItemPredictors out{Eigen::MatrixXd(n, num_items), Eigen::MatrixXd(n, num_items)};
  for (Eigen::Index j = 0; j < num_items; ++j) {
    const auto& item = params.items[j];
    out.intercepts.col(j) = (x * item.intercept_dif).array() + item.intercept;
    out.slopes.col(j) = (x * item.slope_dif).array() + item.slope;
  }
  return out;
}

/// log f(y | eta) for a Bernoulli-logit response, with p = sigmoid(eta) returned.
inline double bernoulli_logit(double y, double eta, double& p) {
  const double e = std::exp(-std::abs(eta));
  const double softplus = std::max(eta, 0.0) + std::log1p(e);
  p = eta >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  return y * eta - softplus;
}

inline double bernoulli_logit(double y, double eta) {
  const double e = std::exp(-std::abs(eta));
  return y * eta - (std::max(eta, 0.0) + std::log1p(e));
}

/// Fills log_joint[q] = log w_q + sum_j log f_j(y_ij | theta_iq) and, when
/// `probs` is non-null, probs[j * Q + q] = P(Y_ij = 1 | theta_iq).
/// Returns the log-sum-exp over q.
inline double person_log_joint(Eigen::Index i, const Dataset& data, const ItemPredictors& pred,
                               const QuadratureGrid& grid, std::vector<double>& log_joint,
                               std::vector<double>* probs) {
  const Eigen::Index num_nodes = grid.num_nodes();
  const Eigen::Index num_items = data.num_items();
  const auto& y = data.responses();
  const auto& logw = grid.log_weights();
  log_joint.resize(num_nodes);
  if (probs) probs->resize(num_items * num_nodes);
  for (Eigen::Index q = 0; q < num_nodes; ++q) log_joint[q] = logw[q];
  for (Eigen::Index j = 0; j < num_items; ++j) {
    const double alpha = pred.intercepts(i, j);
    const double beta = pred.slopes(i, j);
    const double yij = y(i, j);
    if (probs) {
      double* pj = probs->data() + j * num_nodes;
      for (Eigen::Index q = 0; q < num_nodes; ++q)
        log_joint[q] += bernoulli_logit(yij, alpha + beta * grid.node(i, q), pj[q]);
    } else {
      for (Eigen::Index q = 0; q < num_nodes; ++q)
        log_joint[q] += bernoulli_logit(yij, alpha + beta * grid.node(i, q));
    }
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : log_joint) peak = std::max(peak, v);
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : log_joint) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

}  // namespace regdif::detail
