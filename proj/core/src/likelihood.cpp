#include "regdif/likelihood.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "regdif/errors.hpp"

namespace regdif {

namespace {

void check_dimensions(const ParamVector& params, const Dataset& data, const QuadratureGrid& grid) {
  if (params.num_items() != data.num_items())
    throw std::invalid_argument("parameter item count " + std::to_string(params.num_items()) +
                                " does not match dataset J=" + std::to_string(data.num_items()));
  if (params.num_covariates() != data.num_covariates())
    throw std::invalid_argument("parameter covariate count " +
                                std::to_string(params.num_covariates()) +
                                " does not match dataset K=" +
                                std::to_string(data.num_covariates()));
  if (grid.num_persons() != data.num_persons())
    throw std::invalid_argument("quadrature grid built for " +
                                std::to_string(grid.num_persons()) + " persons, dataset has " +
                                std::to_string(data.num_persons()));
}

[[noreturn]] void throw_underflow(Eigen::Index person) {
  throw NumericalError("marginal likelihood of person " + std::to_string(person + 1) +
                       " is not finite; all quadrature terms underflowed or overflowed");
}

// Adds scale * d log f(y_i|x_i) / d xi into `out`.
void add_person_gradient(Eigen::Index i, const Dataset& data, const detail::ItemPredictors& pred,
                         const QuadratureGrid& grid, const ParamLayout& layout,
                         const std::vector<double>& log_joint, double log_marginal,
                         const std::vector<double>& probs, std::vector<double>& posterior,
                         double scale, Eigen::Ref<Eigen::VectorXd> out) {
  const Eigen::Index num_nodes = grid.num_nodes();
  const Eigen::Index num_items = data.num_items();
  const Eigen::Index k_cov = data.num_covariates();
  const auto x = data.covariates().row(i);
  posterior.resize(num_nodes);
  for (Eigen::Index q = 0; q < num_nodes; ++q)
    posterior[q] = std::exp(log_joint[q] - log_marginal);

  double pop_mean_term = 0.0;
  double pop_var_term = 0.0;
  const double mu = grid.means()[i];
  for (Eigen::Index j = 0; j < num_items; ++j) {
    const double y = data.responses()(i, j);
    const double* pj = probs.data() + j * num_nodes;
    double s0 = 0.0, s1 = 0.0;
    for (Eigen::Index q = 0; q < num_nodes; ++q) {
      const double r = posterior[q] * (y - pj[q]);
      s0 += r;
      s1 += r * grid.node(i, q);
    }
    out[layout.slope(j)] += scale * s1;
    out[layout.intercept(j)] += scale * s0;
    for (Eigen::Index k = 0; k < k_cov; ++k) {
      out[layout.intercept_dif(j, k)] += scale * x[k] * s0;
      out[layout.slope_dif(j, k)] += scale * x[k] * s1;
    }
    const double slope = pred.slopes(i, j);
    pop_mean_term += slope * s0;
    pop_var_term += slope * (s1 - mu * s0);
  }
  // d theta_iq / d gamma = x, d theta_iq / d delta = x (theta_iq - mu_i) / 2.
  for (Eigen::Index k = 0; k < k_cov; ++k) {
    out[layout.mean_effect(k)] += scale * x[k] * pop_mean_term;
    out[layout.logvar_effect(k)] += scale * 0.5 * x[k] * pop_var_term;
  }
}

}  // namespace

double irf_probability(double theta, const Eigen::Ref<const Eigen::VectorXd>& x,
                       const ItemParams& item) {
  if (x.size() != item.intercept_dif.size() || x.size() != item.slope_dif.size())
    throw std::invalid_argument("irf_probability: covariate length does not match item K");
  if (!std::isfinite(theta) || !x.allFinite() || !std::isfinite(item.slope) ||
      !std::isfinite(item.intercept) || !item.intercept_dif.allFinite() ||
      !item.slope_dif.allFinite())
    throw std::invalid_argument("irf_probability: non-finite input");
  const double eta = item.intercept_at(x) + item.slope_at(x) * theta;
  double p = 0.0;
  detail::bernoulli_logit(1.0, eta, p);
  return p;
}

Eigen::VectorXd person_loglik(const ParamVector& params, const Dataset& data,
                              const QuadratureGrid& grid) {
  check_dimensions(params, data, grid);
  const auto pred = detail::item_predictors(params, data.covariates());
  std::vector<double> log_joint;
  Eigen::VectorXd out(data.num_persons());
  for (Eigen::Index i = 0; i < data.num_persons(); ++i) {
    out[i] = detail::person_log_joint(i, data, pred, grid, log_joint, nullptr);
    if (!std::isfinite(out[i])) throw_underflow(i);
  }
  return out;
}

double marginal_loglik(const ParamVector& params, const Dataset& data,
                       const QuadratureGrid& grid) {
  return person_loglik(params, data, grid).mean();
}

ScoreResult score_vector(const ParamVector& params, const Dataset& data,
                         const QuadratureGrid& grid) {
  check_dimensions(params, data, grid);
  const ParamLayout layout = params.layout();
  const Eigen::Index n = data.num_persons();
  const auto pred = detail::item_predictors(params, data.covariates());
  std::vector<double> log_joint, probs, posterior;
  ScoreResult result;
  result.per_person = Eigen::MatrixXd::Zero(n, layout.dimension());
  Eigen::VectorXd row(layout.dimension());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = detail::person_log_joint(i, data, pred, grid, log_joint, &probs);
    if (!std::isfinite(lse)) throw_underflow(i);
    row.setZero();
    add_person_gradient(i, data, pred, grid, layout, log_joint, lse, probs, posterior, -1.0, row);
    result.per_person.row(i) = row.transpose();
  }
  result.gradient = result.per_person.colwise().mean().transpose();
  return result;
}

Eigen::VectorXd loss_gradient(const ParamVector& params, const Dataset& data,
                              const QuadratureGrid& grid) {
  check_dimensions(params, data, grid);
  const ParamLayout layout = params.layout();
  const Eigen::Index n = data.num_persons();
  const auto pred = detail::item_predictors(params, data.covariates());
  std::vector<double> log_joint, probs, posterior;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(layout.dimension());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = detail::person_log_joint(i, data, pred, grid, log_joint, &probs);
    if (!std::isfinite(lse)) throw_underflow(i);
    add_person_gradient(i, data, pred, grid, layout, log_joint, lse, probs, posterior, -1.0, total);
  }
  return total / static_cast<double>(n);
}

PopulationLoss population_loss(const ParamVector& params, const Dataset& data,
                               const QuadratureGrid& grid) {
  check_dimensions(params, data, grid);
  const Eigen::Index n = data.num_persons();
  const Eigen::Index k_cov = data.num_covariates();
  const Eigen::Index num_nodes = grid.num_nodes();
  const auto pred = detail::item_predictors(params, data.covariates());
  std::vector<double> log_joint, probs, posterior(num_nodes);
  PopulationLoss out;
  out.gradient = Eigen::VectorXd::Zero(2 * k_cov);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = detail::person_log_joint(i, data, pred, grid, log_joint, &probs);
    if (!std::isfinite(lse)) throw_underflow(i);
    total += lse;
    for (Eigen::Index q = 0; q < num_nodes; ++q) posterior[q] = std::exp(log_joint[q] - lse);
    const double mu = grid.means()[i];
    double mean_term = 0.0, var_term = 0.0;
    for (Eigen::Index j = 0; j < data.num_items(); ++j) {
      const double y = data.responses()(i, j);
      const double* pj = probs.data() + j * num_nodes;
      double s0 = 0.0, s1 = 0.0;
      for (Eigen::Index q = 0; q < num_nodes; ++q) {
        const double r = posterior[q] * (y - pj[q]);
        s0 += r;
        s1 += r * (grid.node(i, q) - mu);
      }
      mean_term += pred.slopes(i, j) * s0;
      var_term += pred.slopes(i, j) * s1;
    }
    const auto x = data.covariates().row(i);
    for (Eigen::Index k = 0; k < k_cov; ++k) {
      out.gradient[k] -= x[k] * mean_term;
      out.gradient[k_cov + k] -= 0.5 * x[k] * var_term;
    }
  }
  out.value = -total / static_cast<double>(n);
  out.gradient /= static_cast<double>(n);
  return out;
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                            const Eigen::VectorXd& x, double step) {
  Eigen::MatrixXd jac;
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + step;
    const Eigen::VectorXd up = fn(probe);
    probe[k] = x[k] - step;
    const Eigen::VectorXd down = fn(probe);
    probe[k] = x[k];
    if (k == 0) jac.resize(up.size(), x.size());
    jac.col(k) = (up - down) / (2.0 * step);
  }
  return jac;
}

Eigen::MatrixXd observed_information(const ParamVector& params, const Dataset& data,
                                     const QuadratureGrid& grid, double step) {
  check_dimensions(params, data, grid);
  const ParamLayout layout = params.layout();
  const HermiteRule& rule = grid.rule();
  auto gradient_at = [&](const Eigen::VectorXd& flat) {
    const ParamVector p = ParamVector::unflatten(flat, layout);
    return loss_gradient(p, data, build_quadrature(rule, p.population, data.covariates()));
  };
  Eigen::MatrixXd h = fd_jacobian(gradient_at, params.flatten(), step);
  h = 0.5 * (h + h.transpose()).eval();
  for (Eigen::Index c = 0; c < h.cols(); ++c)
    if (!h.col(c).allFinite())
      throw NumericalError("observed information has non-finite entries in coordinate " +
                           layout.name(c));
  return h;
}

}  // namespace regdif
