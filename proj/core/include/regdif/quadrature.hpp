#pragma once

#include <Eigen/Dense>

#include "regdif/params.hpp"

namespace regdif {

/// Gauss-Hermite rule (physicists' convention, weight exp(-z^2)) with the
/// weights divided by sqrt(pi) so that they sum to one. Nodes are increasing.
struct HermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }
};

/// Newton iteration on the normalized Hermite recurrence. Throws
/// NumericalError naming `num_nodes` if a root fails to converge.
HermiteRule gauss_hermite(int num_nodes);

struct LatentMoments {
  double mean;
  double variance;
};

/// mu(x) = gamma'x, sigma^2(x) = exp(delta'x). Throws NumericalError when the
/// log variance overflows or underflows.
LatentMoments latent_moments(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const PopulationParams& pop);

/// Per-person quadrature: theta_iq = mu_i + sqrt(2) sigma_i z_q with weight w_q.
class QuadratureGrid {
 public:
  QuadratureGrid(HermiteRule rule, Eigen::VectorXd means, Eigen::VectorXd sds);

  Eigen::Index num_nodes() const { return rule_.size(); }
  Eigen::Index num_persons() const { return means_.size(); }

  const HermiteRule& rule() const { return rule_; }
  const Eigen::VectorXd& means() const { return means_; }
  const Eigen::VectorXd& sds() const { return sds_; }
  const Eigen::VectorXd& log_weights() const { return log_weights_; }

  double node(Eigen::Index person, Eigen::Index q) const {
    return means_[person] + scale_[person] * rule_.nodes[q];
  }
  double weight(Eigen::Index q) const { return rule_.weights[q]; }

  /// Nodes of one person (length Q).
  Eigen::VectorXd person_nodes(Eigen::Index person) const;

 private:
  HermiteRule rule_;
  Eigen::VectorXd means_;
  Eigen::VectorXd sds_;
  Eigen::VectorXd scale_;  // sqrt(2) * sd
  Eigen::VectorXd log_weights_;
};

QuadratureGrid build_quadrature(int num_nodes, const PopulationParams& pop,
                                const Eigen::MatrixXd& covariates);
QuadratureGrid build_quadrature(const HermiteRule& rule, const PopulationParams& pop,
                                const Eigen::MatrixXd& covariates);

}  // namespace regdif
