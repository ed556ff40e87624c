#include "regdif/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "regdif/errors.hpp"

namespace regdif {

HermiteRule gauss_hermite(int num_nodes) {
  if (num_nodes < 1)
    throw std::invalid_argument("gauss_hermite: need at least one node, got " +
                                std::to_string(num_nodes));
  const int n = num_nodes;
  constexpr int kMaxIter = 100;
  // pi^(-1/4): value of the normalized H_0.
  const double pim4 = std::pow(std::numbers::pi, -0.25);

  Eigen::VectorXd x(n), w(n);
  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    // Asymptotic starting guesses for the largest roots, then extrapolation.
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    // Sign changes along p_0(t), ..., p_n(t) count the zeros of p_n above t.
    auto zeros_above = [&](double t) {
      double p1 = pim4, p2 = 0.0;
      int changes = 0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = t * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
        if ((p1 < 0.0) != (p2 < 0.0)) ++changes;
      }
      return changes;
    };
    // z is the (k+1)-th largest zero.
    auto is_root = [&](double r, int k) {
      const double eps = 1e-9 * std::max(1.0, std::abs(r));
      return std::isfinite(r) && zeros_above(r + eps) == k && zeros_above(r - eps) == k + 1;
    };
    auto newton = [&](double& root, double& deriv) {
      for (int it = 0; it < kMaxIter; ++it) {
        double p1 = pim4, p2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = root * std::sqrt(2.0 / (j + 1)) * p2 -
               std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
        }
        deriv = std::sqrt(2.0 * n) * p2;
        const double prev = root;
        root = prev - p1 / deriv;
        if (std::abs(root - prev) <= 1e-14 * std::max(1.0, std::abs(root))) return true;
      }
      return false;
    };
    double pp = 0.0;
    bool converged = newton(z, pp) && is_root(z, i);
    if (!converged && i > 0) {
      // Extrapolated guess landed on the wrong root: restart below the
      // previous root using the local zero spacing pi / sqrt(2n + 1 - z^2).
      const double top = x[i - 1];
      const double gap = std::numbers::pi / std::sqrt(std::max(2.0 * n + 1 - top * top, 1.0));
      for (double frac : {1.0, 0.8, 0.6, 0.9, 0.7, 0.5, 0.4, 0.3, 1.1, 1.2}) {
        z = top - frac * gap;
        if (newton(z, pp) && is_root(z, i)) {
          converged = true;
          break;
        }
      }
    }
    if (!converged || !std::isfinite(z))
      throw NumericalError("gauss_hermite: root " + std::to_string(i) +
                           " did not converge for Q=" + std::to_string(n));
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
  if (n % 2 == 1) x[half - 1] = 0.0;

  HermiteRule rule;
  rule.nodes = x.reverse();
  rule.weights = w.reverse() / std::sqrt(std::numbers::pi);
  return rule;
}

LatentMoments latent_moments(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const PopulationParams& pop) {
  if (x.size() != pop.mean_effects.size() || x.size() != pop.logvar_effects.size())
    throw std::invalid_argument("latent_moments: covariate length " + std::to_string(x.size()) +
                                " does not match population K=" +
                                std::to_string(pop.mean_effects.size()));
  const double log_var = pop.logvar_effects.dot(x);
  const double variance = std::exp(log_var);
  if (!std::isfinite(variance) || variance <= 0.0 || !std::isfinite(log_var))
    throw NumericalError("latent_moments: exp(delta'x) out of range for delta'x = " +
                         std::to_string(log_var));
  return {pop.mean_effects.dot(x), variance};
}

QuadratureGrid::QuadratureGrid(HermiteRule rule, Eigen::VectorXd means, Eigen::VectorXd sds)
    : rule_(std::move(rule)), means_(std::move(means)), sds_(std::move(sds)) {
  if (means_.size() != sds_.size())
    throw std::invalid_argument("QuadratureGrid: means and sds differ in length");
  scale_ = std::numbers::sqrt2 * sds_;
  log_weights_ = rule_.weights.array().log();
}

Eigen::VectorXd QuadratureGrid::person_nodes(Eigen::Index person) const {
  return means_[person] + scale_[person] * rule_.nodes.array();
}

QuadratureGrid build_quadrature(int num_nodes, const PopulationParams& pop,
                                const Eigen::MatrixXd& covariates) {
  return build_quadrature(gauss_hermite(num_nodes), pop, covariates);
}

QuadratureGrid build_quadrature(const HermiteRule& rule, const PopulationParams& pop,
                                const Eigen::MatrixXd& covariates) {
  const Eigen::Index n = covariates.rows();
  Eigen::VectorXd means(n), sds(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const LatentMoments m = latent_moments(covariates.row(i).transpose(), pop);
    means[i] = m.mean;
    sds[i] = std::sqrt(m.variance);
  }
  return {rule, std::move(means), std::move(sds)};
}

}  // namespace regdif
