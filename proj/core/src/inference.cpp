#include "regdif/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "regdif/distributions.hpp"
#include "regdif/errors.hpp"
#include "regdif/likelihood.hpp"
#include "regdif/optim.hpp"

namespace regdif {

namespace {

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows,
                          const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = m(rows[r], cols[c]);
  return out;
}

Eigen::VectorXd subvector(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) out[r] = v[idx[r]];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// FocalSpec

FocalSpec FocalSpec::item_dif(const ParamLayout& layout, Eigen::Index item) {
  return {layout.dif_indices(item), "item " + std::to_string(item + 1) + " DIF block"};
}

FocalSpec FocalSpec::item_block(const ParamLayout& layout, Eigen::Index item) {
  return {layout.item_indices(item), "item " + std::to_string(item + 1) + " parameters"};
}

FocalSpec FocalSpec::population(const ParamLayout& layout) {
  return {layout.population_indices(), "population parameters"};
}

FocalSpec FocalSpec::coordinate(const ParamLayout& layout, Eigen::Index index) {
  return {{index}, layout.name(index)};
}

void FocalSpec::validate(Eigen::Index dimension) const {
  if (indices.empty()) throw std::invalid_argument("focal set '" + label + "' is empty");
  std::set<Eigen::Index> seen;
  for (Eigen::Index idx : indices) {
    if (idx < 0 || idx >= dimension)
      throw std::invalid_argument("focal index " + std::to_string(idx) + " out of range");
    if (!seen.insert(idx).second)
      throw std::invalid_argument("focal index " + std::to_string(idx) + " repeated");
  }
}

std::vector<Eigen::Index> InferenceContext::nuisance(const FocalSpec& focal) const {
  std::vector<bool> is_focal(estimate.size(), false);
  for (Eigen::Index idx : focal.indices) is_focal.at(idx) = true;
  std::vector<Eigen::Index> out;
  for (Eigen::Index k = 0; k < estimate.size(); ++k)
    if (!is_focal[k] && !fixed_zero[k]) out.push_back(k);
  return out;
}

InferenceContext prepare_inference(const FitResult& fit, const Dataset& data) {
  InferenceContext ctx;
  ctx.layout = ParamLayout(data.num_items(), data.covariate_names());
  ctx.estimate = fit.estimate.flatten();
  ctx.fixed_zero = fit.penalty.fixed_zero;
  if (ctx.fixed_zero.empty()) ctx.fixed_zero.assign(ctx.estimate.size(), false);
  ctx.num_persons = data.num_persons();
  ctx.rule = gauss_hermite(fit.quadrature_nodes);
  const QuadratureGrid grid = build_quadrature(ctx.rule, fit.estimate.population,
                                               data.covariates());
  ScoreResult score = score_vector(fit.estimate, data, grid);
  ctx.gradient = std::move(score.gradient);
  ctx.score_rows = std::move(score.per_person);
  ctx.score_gram = ctx.score_rows.transpose() * ctx.score_rows / static_cast<double>(ctx.num_persons);
  ctx.hessian = observed_information(fit.estimate, data, grid);
  return ctx;
}

// ---------------------------------------------------------------------------
// Decorrelation

ProjectionEstimate estimate_w(const Eigen::MatrixXd& score_gram,
                              const std::vector<Eigen::Index>& focal,
                              const std::vector<Eigen::Index>& nuisance, double lambda_prime) {
  if (!(lambda_prime >= 0.0)) throw std::invalid_argument("estimate_w: lambda' must be >= 0");
  const auto d1 = static_cast<Eigen::Index>(nuisance.size());
  const Eigen::MatrixXd a = submatrix(score_gram, nuisance, nuisance);
  const Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d1, lambda_prime);
  ProjectionEstimate out;
  out.w = Eigen::MatrixXd::Zero(focal.size(), d1);
  for (std::size_t m = 0; m < focal.size(); ++m) {
    const Eigen::VectorXd b = submatrix(score_gram, nuisance, {focal[m]}).col(0);
    const QuadraticL1Result cd = minimize_quadratic_l1(a, b, penalty, {}, Eigen::VectorXd::Zero(d1),
                                                       kProjectionTol, 200000);
    out.w.row(m) = cd.x.transpose();
    if (!cd.converged) {
      out.converged = false;
      out.warnings.push_back("projection row " + std::to_string(m) +
                             " did not reach the coordinate tolerance");
    }
    for (Eigen::Index k : cd.degenerate)
      out.warnings.push_back("nuisance score column " + std::to_string(nuisance[k]) +
                             " is identically zero; its projection weight is set to 0");
  }
  return out;
}

ProjectionEstimate estimate_w(const InferenceContext& ctx, const FocalSpec& focal,
                              double lambda_prime) {
  focal.validate(ctx.estimate.size());
  return estimate_w(ctx.score_gram, focal.indices, ctx.nuisance(focal), lambda_prime);
}

Eigen::VectorXd decorrelated_score(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& w,
                                   const std::vector<Eigen::Index>& focal,
                                   const std::vector<Eigen::Index>& nuisance) {
  if (w.rows() != static_cast<Eigen::Index>(focal.size()) ||
      w.cols() != static_cast<Eigen::Index>(nuisance.size()))
    throw std::invalid_argument("decorrelated_score: W must be d0 x d1 (" +
                                std::to_string(focal.size()) + " x " +
                                std::to_string(nuisance.size()) + ")");
  return subvector(gradient, focal) - w * subvector(gradient, nuisance);
}

Eigen::VectorXd decorrelated_score(const ParamVector& params, const Eigen::MatrixXd& w,
                                   const Dataset& data, const FocalSpec& focal,
                                   const std::vector<Eigen::Index>& nuisance,
                                   const HermiteRule& rule) {
  const QuadratureGrid grid = build_quadrature(rule, params.population, data.covariates());
  return decorrelated_score(loss_gradient(params, data, grid), w, focal.indices, nuisance);
}

Eigen::MatrixXd efficient_information(const Eigen::MatrixXd& hessian, const Eigen::MatrixXd& w,
                                      const std::vector<Eigen::Index>& focal,
                                      const std::vector<Eigen::Index>& nuisance) {
  if (w.rows() != static_cast<Eigen::Index>(focal.size()) ||
      w.cols() != static_cast<Eigen::Index>(nuisance.size()))
    throw std::invalid_argument("efficient_information: W must be d0 x d1");
  Eigen::MatrixXd info = submatrix(hessian, focal, focal) - w * submatrix(hessian, nuisance, focal);
  return 0.5 * (info + info.transpose());
}

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info, const std::string& label) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  if (eig.info() != Eigen::Success)
    throw SingularInformationError("information for " + label + ": eigen-decomposition failed");
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxConditionNumber) {
    std::ostringstream msg;
    msg << "information for " << label << " is singular or not positive definite (eigenvalues "
        << lo << " .. " << hi << ")";
    throw SingularInformationError(msg.str());
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success)
    throw SingularInformationError("information for " + label + ": Cholesky factorization failed");
  return llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
}

// ---------------------------------------------------------------------------
// Dscore test and one-step estimator

DscoreReport dscore_test(const InferenceContext& ctx, const Dataset& data, const FocalSpec& focal,
                         double lambda_prime) {
  focal.validate(ctx.estimate.size());
  for (Eigen::Index idx : focal.indices)
    if (ctx.fixed_zero[idx])
      throw std::invalid_argument("focal coordinate " + ctx.layout.name(idx) +
                                  " is fixed in the fit and cannot be tested");
  const std::vector<Eigen::Index> nuisance = ctx.nuisance(focal);
  ProjectionEstimate proj = estimate_w(ctx.score_gram, focal.indices, nuisance, lambda_prime);

  Eigen::VectorXd at_null = ctx.estimate;
  for (Eigen::Index idx : focal.indices) at_null[idx] = 0.0;
  const ParamVector null_params = ParamVector::unflatten(at_null, ctx.layout);

  DscoreReport rep;
  rep.label = focal.label;
  rep.focal = focal.indices;
  rep.df = static_cast<int>(focal.size());
  rep.score_at_null =
      decorrelated_score(null_params, proj.w, data, focal, nuisance, ctx.rule);
  rep.efficient_info = efficient_information(ctx.hessian, proj.w, focal.indices, nuisance);
  const Eigen::MatrixXd inv = invert_information(rep.efficient_info, focal.label);
  rep.statistic = static_cast<double>(ctx.num_persons) * rep.score_at_null.dot(inv * rep.score_at_null);
  if (rep.statistic < 0.0) rep.statistic = 0.0;
  rep.p_value = chi_square_sf(rep.statistic, rep.df);
  rep.w = std::move(proj.w);
  rep.warnings = std::move(proj.warnings);
  return rep;
}

DscoreReport dscore_test(const FitResult& fit, const Dataset& data, const FocalSpec& focal,
                         double lambda_prime) {
  return dscore_test(prepare_inference(fit, data), data, focal, lambda_prime);
}

DebiasReport one_step_from_score(const Eigen::VectorXd& psi_hat, const Eigen::VectorXd& score,
                                 const Eigen::MatrixXd& efficient_info, Eigen::Index n,
                                 double alpha, const std::string& label) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  const Eigen::MatrixXd inv = invert_information(efficient_info, label);
  DebiasReport rep;
  rep.label = label;
  rep.alpha = alpha;
  rep.estimate = psi_hat;
  rep.debiased = psi_hat - inv * score;
  rep.se = (inv.diagonal() / static_cast<double>(n)).array().sqrt();
  const double z = normal_quantile(1.0 - alpha / 2.0);
  rep.ci_lower = rep.debiased - z * rep.se;
  rep.ci_upper = rep.debiased + z * rep.se;
  return rep;
}

DebiasReport one_step_debias(const InferenceContext& ctx, const FocalSpec& focal,
                             double lambda_prime, double alpha) {
  focal.validate(ctx.estimate.size());
  const std::vector<Eigen::Index> nuisance = ctx.nuisance(focal);
  ProjectionEstimate proj = estimate_w(ctx.score_gram, focal.indices, nuisance, lambda_prime);
  const Eigen::VectorXd score = decorrelated_score(ctx.gradient, proj.w, focal.indices, nuisance);
  const Eigen::MatrixXd info = efficient_information(ctx.hessian, proj.w, focal.indices, nuisance);
  DebiasReport rep = one_step_from_score(subvector(ctx.estimate, focal.indices), score, info,
                                         ctx.num_persons, alpha, focal.label);
  rep.focal = focal.indices;
  rep.warnings = std::move(proj.warnings);
  return rep;
}

DebiasReport one_step_debias(const FitResult& fit, const Dataset& data, const FocalSpec& focal,
                             double lambda_prime, double alpha) {
  return one_step_debias(prepare_inference(fit, data), focal, lambda_prime, alpha);
}

// ---------------------------------------------------------------------------
// Wald

namespace {

struct FreeInverse {
  std::vector<Eigen::Index> free;
  Eigen::MatrixXd inverse;
};

FreeInverse free_inverse(const InferenceContext& ctx) {
  FreeInverse out;
  for (Eigen::Index k = 0; k < ctx.estimate.size(); ++k)
    if (!ctx.fixed_zero[k]) out.free.push_back(k);
  out.inverse = invert_information(submatrix(ctx.hessian, out.free, out.free),
                                   "the free model parameters");
  return out;
}

}  // namespace

Eigen::VectorXd wald_standard_errors(const InferenceContext& ctx) {
  const FreeInverse fi = free_inverse(ctx);
  Eigen::VectorXd se = Eigen::VectorXd::Constant(ctx.estimate.size(),
                                                 std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < fi.free.size(); ++r)
    se[fi.free[r]] = std::sqrt(fi.inverse(r, r) / static_cast<double>(ctx.num_persons));
  return se;
}

WaldReport wald_test(const InferenceContext& ctx, const std::vector<Eigen::Index>& tested,
                     const std::string& label) {
  if (tested.empty()) throw std::invalid_argument("wald_test: nothing to test");
  const FreeInverse fi = free_inverse(ctx);
  std::vector<Eigen::Index> pos;
  for (Eigen::Index idx : tested) {
    const auto it = std::find(fi.free.begin(), fi.free.end(), idx);
    if (it == fi.free.end())
      throw std::invalid_argument("wald_test: coordinate " + ctx.layout.name(idx) +
                                  " is fixed in the fit");
    pos.push_back(static_cast<Eigen::Index>(it - fi.free.begin()));
  }
  const Eigen::MatrixXd block = submatrix(fi.inverse, pos, pos);
  const Eigen::VectorXd b = subvector(ctx.estimate, tested);
  WaldReport rep;
  rep.label = label;
  rep.tested = tested;
  rep.df = static_cast<int>(tested.size());
  if (b.isZero(0.0)) {
    rep.statistic = 0.0;
  } else {
    const Eigen::MatrixXd block_inv = invert_information(0.5 * (block + block.transpose()), label);
    rep.statistic = static_cast<double>(ctx.num_persons) * b.dot(block_inv * b);
  }
  rep.p_value = chi_square_sf(rep.statistic, rep.df);
  return rep;
}

WaldReport wald_test_oracle(const Dataset& data, const std::vector<Eigen::Index>& anchors,
                            Eigen::Index target_item, const EmConfig& config) {
  if (anchors.empty()) throw std::invalid_argument("wald_test_oracle: anchors must be nonempty");
  if (std::find(anchors.begin(), anchors.end(), target_item) != anchors.end())
    throw std::invalid_argument("wald_test_oracle: target item is an anchor");
  const ParamLayout layout(data.num_items(), data.covariate_names());
  const FitResult fit = penalized_em_fit(data, PenaltyConfig::anchored(layout, anchors), config);
  const InferenceContext ctx = prepare_inference(fit, data);
  return wald_test(ctx, layout.dif_indices(target_item),
                   "item " + std::to_string(target_item + 1) + " DIF block");
}

}  // namespace regdif
