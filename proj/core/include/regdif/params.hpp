#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace regdif {

/// Parameters of one item: slope a_j, intercept d_j, and the covariate
/// effects on the intercept (beta0) and on the slope (beta1).
struct ItemParams {
  double slope = 1.0;
  double intercept = 0.0;
  Eigen::VectorXd intercept_dif;  // beta0, length K
  Eigen::VectorXd slope_dif;      // beta1, length K

  static ItemParams neutral(Eigen::Index num_covariates);

  /// a_j + beta1' x
  double slope_at(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// d_j + beta0' x
  double intercept_at(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  bool has_dif() const;
};

/// Covariate effects on the latent mean (gamma) and on the log variance (delta).
struct PopulationParams {
  Eigen::VectorXd mean_effects;    // gamma, length K
  Eigen::VectorXd logvar_effects;  // delta, length K

  static PopulationParams zero(Eigen::Index num_covariates);
};

/// Index bookkeeping for the flattened parameter vector
///   (a_1, d_1, beta0_1, beta1_1, ..., a_J, d_J, beta0_J, beta1_J, gamma, delta).
class ParamLayout {
 public:
  ParamLayout(Eigen::Index num_items, Eigen::Index num_covariates);
  ParamLayout(Eigen::Index num_items, std::vector<std::string> covariate_names);

  Eigen::Index num_items() const { return num_items_; }
  Eigen::Index num_covariates() const { return num_covariates_; }
  Eigen::Index item_block_size() const { return 2 + 2 * num_covariates_; }
  Eigen::Index dimension() const;

  Eigen::Index slope(Eigen::Index item) const;
  Eigen::Index intercept(Eigen::Index item) const;
  Eigen::Index intercept_dif(Eigen::Index item, Eigen::Index k) const;
  Eigen::Index slope_dif(Eigen::Index item, Eigen::Index k) const;
  Eigen::Index mean_effect(Eigen::Index k) const;
  Eigen::Index logvar_effect(Eigen::Index k) const;

  /// beta0_j then beta1_j (2K indices).
  std::vector<Eigen::Index> dif_indices(Eigen::Index item) const;
  /// a_j, d_j, beta0_j, beta1_j.
  std::vector<Eigen::Index> item_indices(Eigen::Index item) const;
  /// gamma then delta.
  std::vector<Eigen::Index> population_indices() const;
  /// Every beta0/beta1 coordinate of every item.
  std::vector<Eigen::Index> all_dif_indices() const;

  bool is_dif(Eigen::Index index) const;
  /// Item owning the coordinate, or -1 for population coordinates.
  Eigen::Index item_of(Eigen::Index index) const;

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  /// Stable names: item{j}_a, item{j}_d, item{j}_beta0_{cov}, item{j}_beta1_{cov},
  /// pop_gamma_{cov}, pop_delta_{cov}; j is 1-based.
  std::string name(Eigen::Index index) const;
  std::vector<std::string> names() const;
  /// Throws std::invalid_argument for an unknown name.
  Eigen::Index index_of(const std::string& name) const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  Eigen::Index num_items_;
  Eigen::Index num_covariates_;
  std::vector<std::string> covariate_names_;
};

/// Full model parameter collection.
struct ParamVector {
  std::vector<ItemParams> items;
  PopulationParams population;

  /// a_j = 1, d_j = 0, all DIF and population effects 0.
  static ParamVector neutral(Eigen::Index num_items, Eigen::Index num_covariates);
  static ParamVector unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat,
                               const ParamLayout& layout);

  Eigen::Index num_items() const { return static_cast<Eigen::Index>(items.size()); }
  Eigen::Index num_covariates() const { return population.mean_effects.size(); }
  ParamLayout layout() const { return {num_items(), num_covariates()}; }
  Eigen::VectorXd flatten() const;

  /// Throws std::invalid_argument on inconsistent lengths or non-finite entries.
  void validate() const;
};

}  // namespace regdif
