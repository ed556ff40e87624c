#include "regdif/em.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "kernel.hpp"
#include "regdif/errors.hpp"
#include "regdif/likelihood.hpp"
#include "regdif/optim.hpp"

namespace regdif {

// ---------------------------------------------------------------------------
// PenaltyConfig / EmConfig

PenaltyConfig PenaltyConfig::lasso(const ParamLayout& layout, double lambda) {
  PenaltyConfig cfg;
  cfg.lambda = lambda;
  cfg.penalized.assign(layout.dimension(), false);
  cfg.fixed_zero.assign(layout.dimension(), false);
  for (Eigen::Index idx : layout.all_dif_indices()) cfg.penalized[idx] = true;
  return cfg;
}

PenaltyConfig PenaltyConfig::anchored(const ParamLayout& layout,
                                      const std::vector<Eigen::Index>& anchor_items) {
  PenaltyConfig cfg = lasso(layout, 0.0);
  for (Eigen::Index j : anchor_items) {
    if (j < 0 || j >= layout.num_items())
      throw std::invalid_argument("anchor item " + std::to_string(j + 1) + " out of range");
    cfg.fix_zero(layout.dif_indices(j));
  }
  return cfg;
}

PenaltyConfig& PenaltyConfig::fix_zero(const std::vector<Eigen::Index>& indices) {
  for (Eigen::Index idx : indices) {
    fixed_zero.at(idx) = true;
    penalized.at(idx) = false;
  }
  return *this;
}

void PenaltyConfig::validate(const ParamLayout& layout) const {
  const auto dim = static_cast<std::size_t>(layout.dimension());
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("lambda must be finite and nonnegative");
  if (penalized.size() != dim || fixed_zero.size() != dim)
    throw std::invalid_argument("penalty masks must have length d=" + std::to_string(dim));
  for (std::size_t k = 0; k < dim; ++k) {
    if (penalized[k] && !layout.is_dif(static_cast<Eigen::Index>(k)))
      throw std::invalid_argument("penalty applied to non-DIF coordinate " +
                                  layout.name(static_cast<Eigen::Index>(k)));
    if (penalized[k] && fixed_zero[k])
      throw std::invalid_argument("coordinate " + layout.name(static_cast<Eigen::Index>(k)) +
                                  " is both penalized and fixed at zero");
  }
}

std::vector<Eigen::Index> PenaltyConfig::free_indices() const {
  std::vector<Eigen::Index> out;
  for (std::size_t k = 0; k < fixed_zero.size(); ++k)
    if (!fixed_zero[k]) out.push_back(static_cast<Eigen::Index>(k));
  return out;
}

double PenaltyConfig::penalty_value(const Eigen::VectorXd& flat) const {
  if (lambda == 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < penalized.size(); ++k)
    if (penalized[k]) acc += std::abs(flat[static_cast<Eigen::Index>(k)]);
  return lambda * acc;
}

void EmConfig::validate() const {
  if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
  if (!(em_tol > 0.0) || !(mstep_tol > 0.0))
    throw std::invalid_argument("tolerances must be positive");
  if (quadrature_nodes < 1) throw std::invalid_argument("quadrature_nodes must be at least 1");
  if (max_irls < 1) throw std::invalid_argument("max_irls must be at least 1");
}

// ---------------------------------------------------------------------------
// E-step

EStep e_step(const ParamVector& params, const Dataset& data, const QuadratureGrid& grid) {
  if (params.num_items() != data.num_items() || grid.num_persons() != data.num_persons())
    throw std::invalid_argument("e_step: parameter, data and grid dimensions disagree");
  const Eigen::Index n = data.num_persons();
  const Eigen::Index num_nodes = grid.num_nodes();
  const auto pred = detail::item_predictors(params, data.covariates());
  EStep out{Eigen::MatrixXd(n, num_nodes), 0.0};
  std::vector<double> log_joint;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = detail::person_log_joint(i, data, pred, grid, log_joint, nullptr);
    if (!std::isfinite(lse))
      throw NumericalError("posterior weights underflow for person " + std::to_string(i + 1));
    for (Eigen::Index q = 0; q < num_nodes; ++q) out.weights(i, q) = std::exp(log_joint[q] - lse);
    total += lse;
  }
  out.loglik = total / static_cast<double>(n);
  return out;
}

Eigen::MatrixXd posterior_weights(const ParamVector& params, const Dataset& data,
                                  const QuadratureGrid& grid) {
  return e_step(params, data, grid).weights;
}

// ---------------------------------------------------------------------------
// Population M-step

namespace {

struct PosteriorMoments {
  Eigen::VectorXd first;   // sum_q e_iq theta_iq
  Eigen::VectorXd second;  // sum_q e_iq theta_iq^2
};

PosteriorMoments posterior_moments(const Eigen::MatrixXd& weights, const QuadratureGrid& grid) {
  const Eigen::Index n = weights.rows();
  PosteriorMoments m{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (Eigen::Index q = 0; q < weights.cols(); ++q) {
      const double t = grid.node(i, q);
      s1 += weights(i, q) * t;
      s2 += weights(i, q) * t * t;
    }
    m.first[i] = s1;
    m.second[i] = s2;
  }
  return m;
}

double population_value(const PosteriorMoments& m, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& packed, Eigen::VectorXd* grad) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  const Eigen::VectorXd mean = x * packed.head(k);
  const Eigen::VectorXd log_var = x * packed.tail(k);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double value = 0.0;
  Eigen::VectorXd d_mean(n), d_logvar(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double inv_var = std::exp(-log_var[i]);
    const double sq = m.second[i] - 2.0 * mean[i] * m.first[i] + mean[i] * mean[i];
    value += half_log_2pi + 0.5 * log_var[i] + 0.5 * sq * inv_var;
    d_mean[i] = -(m.first[i] - mean[i]) * inv_var;
    d_logvar[i] = 0.5 - 0.5 * sq * inv_var;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) {
    grad->resize(2 * k);
    grad->head(k) = x.transpose() * d_mean * inv_n;
    grad->tail(k) = x.transpose() * d_logvar * inv_n;
  }
  return value * inv_n;
}

Eigen::VectorXd pack(const PopulationParams& pop) {
  Eigen::VectorXd v(2 * pop.mean_effects.size());
  v << pop.mean_effects, pop.logvar_effects;
  return v;
}

}  // namespace

double population_objective(const Eigen::MatrixXd& weights, const Dataset& data,
                            const QuadratureGrid& grid, const PopulationParams& pop) {
  return population_value(posterior_moments(weights, grid), data.covariates(), pack(pop), nullptr);
}

namespace {

// BFGS over the coordinates not pinned by `fixed_zero`; `full_fn` sees the
// complete (gamma, delta) vector.
PopulationUpdate minimize_population(const Objective& full_fn, Eigen::VectorXd full,
                                     const std::vector<bool>& fixed_zero, double tol,
                                     Eigen::MatrixXd* inverse_hessian = nullptr) {
  const Eigen::Index dim = full.size();
  if (!fixed_zero.empty() && static_cast<Eigen::Index>(fixed_zero.size()) != dim)
    throw std::invalid_argument("population mask must have length 2K");
  std::vector<Eigen::Index> free;
  for (Eigen::Index m = 0; m < dim; ++m) {
    if (!fixed_zero.empty() && fixed_zero[m])
      full[m] = 0.0;
    else
      free.push_back(m);
  }
  const auto nfree = static_cast<Eigen::Index>(free.size());
  auto expand = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out = full;
    for (Eigen::Index m = 0; m < nfree; ++m) out[free[m]] = v[m];
    return out;
  };
  auto fn = [&](const Eigen::VectorXd& v, Eigen::VectorXd* g) {
    if (!g) return full_fn(expand(v), nullptr);
    Eigen::VectorXd gfull;
    const double f = full_fn(expand(v), &gfull);
    g->resize(nfree);
    for (Eigen::Index m = 0; m < nfree; ++m) (*g)[m] = gfull[free[m]];
    return f;
  };
  const Eigen::Index k = dim / 2;
  PopulationUpdate out;
  Eigen::VectorXd x0(nfree);
  for (Eigen::Index m = 0; m < nfree; ++m) x0[m] = full[free[m]];
  out.objective_start = fn(x0, nullptr);
  if (nfree == 0) {
    out.population.mean_effects = full.head(k);
    out.population.logvar_effects = full.tail(k);
    out.objective_end = out.objective_start;
    out.converged = true;
    return out;
  }
  BfgsOptions opts;
  opts.gradient_tol = tol;
  opts.max_iter = 200;
  if (inverse_hessian) opts.inverse_hessian = *inverse_hessian;
  BfgsResult res = minimize_bfgs(fn, x0, opts);
  if (inverse_hessian) *inverse_hessian = std::move(res.inverse_hessian);
  const Eigen::VectorXd best = expand(res.x);
  out.population.mean_effects = best.head(k);
  out.population.logvar_effects = best.tail(k);
  out.objective_end = res.value;
  out.converged = res.converged;
  return out;
}

}  // namespace

PopulationUpdate m_step_population(const Eigen::MatrixXd& weights, const Dataset& data,
                                   const QuadratureGrid& grid, const PopulationParams& start,
                                   double tol, const std::vector<bool>& fixed_zero) {
  const PosteriorMoments moments = posterior_moments(weights, grid);
  const Eigen::MatrixXd& x = data.covariates();
  auto fn = [&](const Eigen::VectorXd& v, Eigen::VectorXd* g) {
    return population_value(moments, x, v, g);
  };
  return minimize_population(fn, pack(start), fixed_zero, tol);
}

PopulationUpdate m_step_population_marginal(const ParamVector& params, const Dataset& data,
                                            const HermiteRule& rule, double tol,
                                            const std::vector<bool>& fixed_zero,
                                            Eigen::MatrixXd* inverse_hessian) {
  const Eigen::Index k = params.num_covariates();
  ParamVector trial = params;
  auto fn = [&](const Eigen::VectorXd& v, Eigen::VectorXd* g) {
    if (!v.allFinite()) return std::numeric_limits<double>::infinity();
    trial.population.mean_effects = v.head(k);
    trial.population.logvar_effects = v.tail(k);
    try {
      const QuadratureGrid grid = build_quadrature(rule, trial.population, data.covariates());
      PopulationLoss loss = population_loss(trial, data, grid);
      if (g) *g = std::move(loss.gradient);
      return loss.value;
    } catch (const NumericalError&) {
      if (g) g->setZero(2 * k);
      return std::numeric_limits<double>::infinity();
    }
  };
  return minimize_population(fn, pack(params.population), fixed_zero, tol, inverse_hessian);
}

// ---------------------------------------------------------------------------
// Item M-step

ItemConstraint ItemConstraint::from(const PenaltyConfig& penalty, const ParamLayout& layout,
                                    Eigen::Index item) {
  ItemConstraint c;
  for (Eigen::Index idx : layout.item_indices(item)) {
    c.penalized.push_back(penalty.penalized.at(idx));
    c.fixed_zero.push_back(penalty.fixed_zero.at(idx));
  }
  return c;
}

ItemConstraint ItemConstraint::lasso(Eigen::Index num_covariates) {
  ItemConstraint c;
  const auto size = static_cast<std::size_t>(2 + 2 * num_covariates);
  c.penalized.assign(size, true);
  c.penalized[0] = c.penalized[1] = false;
  c.fixed_zero.assign(size, false);
  return c;
}

namespace {

Eigen::VectorXd item_to_vector(const ItemParams& item) {
  const Eigen::Index k = item.intercept_dif.size();
  Eigen::VectorXd v(2 + 2 * k);
  v << item.slope, item.intercept, item.intercept_dif, item.slope_dif;
  return v;
}

ItemParams vector_to_item(const Eigen::VectorXd& v) {
  const Eigen::Index k = (v.size() - 2) / 2;
  ItemParams item;
  item.slope = v[0];
  item.intercept = v[1];
  item.intercept_dif = v.segment(2, k);
  item.slope_dif = v.segment(2 + k, k);
  return item;
}

struct ItemModel {
  double loss = 0.0;  // smooth part only
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
};

// Weighted logistic loss over the n*Q pseudo-records of one item. Features
// in item order are (theta, 1, x, theta*x); the curvature is assembled from
// per-person node moments so the cost stays O(nQ).
ItemModel evaluate_item(const Eigen::MatrixXd& weights, const Dataset& data,
                        const QuadratureGrid& grid, Eigen::Index item, const Eigen::VectorXd& v,
                        bool with_derivatives) {
  const Eigen::Index n = data.num_persons();
  const Eigen::Index k = data.num_covariates();
  const Eigen::Index p = 2 + 2 * k;
  const Eigen::MatrixXd& x = data.covariates();
  const auto slope_dif = v.segment(2 + k, k);
  const auto intercept_dif = v.segment(2, k);

  ItemModel out;
  if (with_derivatives) {
    out.hessian = Eigen::MatrixXd::Zero(p, p);
    out.gradient = Eigen::VectorXd::Zero(p);
  }
  // u = (1, x); slope group (a, beta1) <-> theta*u, intercept group (d, beta0) <-> u.
  auto slope_index = [k](Eigen::Index m) { return m == 0 ? Eigen::Index{0} : 2 + k + m - 1; };
  auto intercept_index = [](Eigen::Index m) { return m == 0 ? Eigen::Index{1} : 2 + m - 1; };
  Eigen::VectorXd u(k + 1);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double alpha = v[1] + intercept_dif.dot(x.row(i).transpose());
    const double beta = v[0] + slope_dif.dot(x.row(i).transpose());
    const double y = data.responses()(i, item);
    double c0 = 0.0, c1 = 0.0, c2 = 0.0, r0 = 0.0, r1 = 0.0;
    for (Eigen::Index q = 0; q < grid.num_nodes(); ++q) {
      const double e = weights(i, q);
      if (e == 0.0) continue;
      const double theta = grid.node(i, q);
      double prob = 0.0;
      loss -= e * detail::bernoulli_logit(y, alpha + beta * theta, prob);
      if (with_derivatives) {
        const double c = e * prob * (1.0 - prob);
        const double r = e * (y - prob);
        c0 += c;
        c1 += c * theta;
        c2 += c * theta * theta;
        r0 += r;
        r1 += r * theta;
      }
    }
    if (!with_derivatives) continue;
    u[0] = 1.0;
    u.tail(k) = x.row(i).transpose();
    for (Eigen::Index m = 0; m <= k; ++m) {
      out.gradient[slope_index(m)] -= r1 * u[m];
      out.gradient[intercept_index(m)] -= r0 * u[m];
      for (Eigen::Index l = 0; l <= k; ++l) {
        const double uu = u[m] * u[l];
        out.hessian(slope_index(m), slope_index(l)) += c2 * uu;
        out.hessian(slope_index(m), intercept_index(l)) += c1 * uu;
        out.hessian(intercept_index(m), slope_index(l)) += c1 * uu;
        out.hessian(intercept_index(m), intercept_index(l)) += c0 * uu;
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = loss * inv_n;
  if (with_derivatives) {
    out.hessian *= inv_n;
    out.gradient *= inv_n;
  }
  return out;
}

double item_penalty(const Eigen::VectorXd& v, double lambda, const ItemConstraint& c) {
  double acc = 0.0;
  for (Eigen::Index m = 0; m < v.size(); ++m)
    if (c.penalized[m]) acc += std::abs(v[m]);
  return lambda * acc;
}

void check_item_args(const Eigen::MatrixXd& weights, const Dataset& data,
                     const QuadratureGrid& grid, Eigen::Index item) {
  if (item < 0 || item >= data.num_items())
    throw std::invalid_argument("item index " + std::to_string(item) + " out of range");
  if (weights.rows() != data.num_persons() || weights.cols() != grid.num_nodes())
    throw std::invalid_argument("posterior weights have the wrong shape");
}

}  // namespace

double item_objective(const Eigen::MatrixXd& weights, const Dataset& data,
                      const QuadratureGrid& grid, Eigen::Index item, double lambda,
                      const ItemParams& params, const ItemConstraint& constraint) {
  check_item_args(weights, data, grid, item);
  const Eigen::VectorXd v = item_to_vector(params);
  return evaluate_item(weights, data, grid, item, v, false).loss +
         item_penalty(v, lambda, constraint);
}

Eigen::VectorXd item_objective_gradient(const Eigen::MatrixXd& weights, const Dataset& data,
                                        const QuadratureGrid& grid, Eigen::Index item,
                                        const ItemParams& params) {
  check_item_args(weights, data, grid, item);
  return evaluate_item(weights, data, grid, item, item_to_vector(params), true).gradient;
}

ItemUpdate m_step_item(const Eigen::MatrixXd& weights, const Dataset& data,
                       const QuadratureGrid& grid, Eigen::Index item, double lambda,
                       const ItemParams& start, double tol, const ItemConstraint& constraint,
                       int max_irls) {
  check_item_args(weights, data, grid, item);
  if (!(lambda >= 0.0)) throw std::invalid_argument("m_step_item: lambda must be nonnegative");
  const Eigen::Index p = 2 + 2 * data.num_covariates();
  if (static_cast<Eigen::Index>(constraint.penalized.size()) != p ||
      static_cast<Eigen::Index>(constraint.fixed_zero.size()) != p)
    throw std::invalid_argument("m_step_item: constraint masks must have length 2+2K");

  Eigen::VectorXd current = item_to_vector(start);
  for (Eigen::Index m = 0; m < p; ++m)
    if (constraint.fixed_zero[m]) current[m] = 0.0;
  Eigen::VectorXd penalty(p);
  for (Eigen::Index m = 0; m < p; ++m) penalty[m] = constraint.penalized[m] ? lambda : 0.0;

  ItemModel model = evaluate_item(weights, data, grid, item, current, true);
  double objective = model.loss + item_penalty(current, lambda, constraint);

  ItemUpdate out;
  for (out.iterations = 0; out.iterations < max_irls;) {
    ++out.iterations;
    // Quadratic model around `current`: 0.5 (z-c)'H(z-c) + g'(z-c) + penalty.
    const Eigen::VectorXd b = model.hessian * current - model.gradient;
    const QuadraticL1Result cd = minimize_quadratic_l1(model.hessian, b, penalty,
                                                       constraint.fixed_zero, current, 0.1 * tol,
                                                       100000);
    const Eigen::VectorXd direction = cd.x - current;
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    ItemModel trial_model;
    double trial_objective = objective;
    for (int halving = 0; halving < 40; ++halving) {
      trial = current + step * direction;
      trial_model = evaluate_item(weights, data, grid, item, trial, true);
      trial_objective = trial_model.loss + item_penalty(trial, lambda, constraint);
      if (std::isfinite(trial_objective) && trial_objective <= objective) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent along the Newton direction; `current` is the best iterate.
      out.diverged = direction.lpNorm<Eigen::Infinity>() >= tol;
      out.converged = !out.diverged;
      break;
    }
    const double change = (trial - current).lpNorm<Eigen::Infinity>();
    current = trial;
    model = std::move(trial_model);
    objective = trial_objective;
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  out.item = vector_to_item(current);
  out.objective = objective;
  return out;
}

// ---------------------------------------------------------------------------
// EM driver

double penalized_loss(const ParamVector& params, const Dataset& data, const QuadratureGrid& grid,
                      const PenaltyConfig& penalty) {
  return -marginal_loglik(params, data, grid) + penalty.penalty_value(params.flatten());
}

FitResult penalized_em_fit(const Dataset& data, const PenaltyConfig& penalty,
                           const EmConfig& config) {
  config.validate();
  const ParamLayout layout(data.num_items(), data.covariate_names());
  penalty.validate(layout);

  ParamVector params = config.start ? *config.start
                                    : ParamVector::neutral(data.num_items(), data.num_covariates());
  params.validate();
  if (params.num_items() != data.num_items() || params.num_covariates() != data.num_covariates())
    throw std::invalid_argument("start values do not match the dataset dimensions");
  {
    Eigen::VectorXd flat = params.flatten();
    for (Eigen::Index idx = 0; idx < flat.size(); ++idx)
      if (penalty.fixed_zero[idx]) flat[idx] = 0.0;
    params = ParamVector::unflatten(flat, layout);
  }

  FitResult fit;
  fit.lambda = penalty.lambda;
  fit.penalty = penalty;
  fit.quadrature_nodes = config.quadrature_nodes;

  std::vector<ItemConstraint> constraints;
  for (Eigen::Index j = 0; j < data.num_items(); ++j)
    constraints.push_back(ItemConstraint::from(penalty, layout, j));

  const HermiteRule rule = gauss_hermite(config.quadrature_nodes);
  QuadratureGrid grid = build_quadrature(rule, params.population, data.covariates());
  EStep estep = e_step(params, data, grid);
  fit.trace.push_back(-estep.loglik + penalty.penalty_value(params.flatten()));

  std::vector<bool> population_fixed;
  for (Eigen::Index idx : layout.population_indices())
    population_fixed.push_back(penalty.fixed_zero[idx]);

  bool warned_population = false;
  std::vector<bool> warned_item(data.num_items(), false);
  std::vector<bool> warned_clamp(data.num_items(), false);
  auto note_population = [&](const PopulationUpdate& pop) {
    if (!pop.converged && !warned_population) {
      fit.warnings.push_back("population M-step reached its iteration cap");
      warned_population = true;
    }
  };
  // The marginal step is several times dearer, so it only takes over once
  // the fixed-node iterations have settled.
  bool fixed_node = true;
  Eigen::MatrixXd population_curvature;
  const bool polish = config.population_step == PopulationStep::kMarginal;
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    ParamVector next = params;
    if (fixed_node) {
      const PopulationUpdate pop = m_step_population(estep.weights, data, grid, params.population,
                                                     config.mstep_tol, population_fixed);
      note_population(pop);
      next.population = pop.population;
    }
    for (Eigen::Index j = 0; j < data.num_items(); ++j) {
      ItemUpdate upd = m_step_item(estep.weights, data, grid, j, penalty.lambda, params.items[j],
                                   config.mstep_tol, constraints[j], config.max_irls);
      if (upd.diverged && !warned_item[j]) {
        fit.warnings.push_back("item " + std::to_string(j + 1) +
                               ": IRLS could not decrease the objective; kept best iterate");
        warned_item[j] = true;
      }
      auto clamp = [&](double& value) {
        if (std::abs(value) > config.clamp_limit) {
          value = std::copysign(config.clamp_limit, value);
          if (!warned_clamp[j]) {
            fit.warnings.push_back("item " + std::to_string(j + 1) + ": estimate clamped to +/-" +
                                   std::to_string(config.clamp_limit));
            warned_clamp[j] = true;
          }
        }
      };
      clamp(upd.item.slope);
      clamp(upd.item.intercept);
      next.items[j] = std::move(upd.item);
    }
    if (!fixed_node) {
      // items first, then the population block on the adaptive likelihood itself
      const PopulationUpdate pop = m_step_population_marginal(
          next, data, rule, config.mstep_tol, population_fixed, &population_curvature);
      note_population(pop);
      next.population = pop.population;
    }
    params = std::move(next);
    grid = build_quadrature(rule, params.population, data.covariates());
    estep = e_step(params, data, grid);
    fit.trace.push_back(-estep.loglik + penalty.penalty_value(params.flatten()));
    fit.iterations = iter;
    const double change = fit.trace[fit.trace.size() - 1] - fit.trace[fit.trace.size() - 2];
    if (std::abs(change) < config.em_tol) {
      if (polish && fixed_node) {
        fixed_node = false;
        continue;
      }
      fit.converged = true;
      break;
    }
  }
  fit.estimate = std::move(params);
  fit.final_loss = fit.trace.back();
  return fit;
}

double select_lambda(Eigen::Index n, double c) {
  if (n < 1) throw std::invalid_argument("select_lambda: n must be at least 1");
  if (!(c > 0.0)) throw std::invalid_argument("select_lambda: c must be positive");
  return c * std::sqrt(1.0 / static_cast<double>(n));
}

}  // namespace regdif
