#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace regdif {

/// Binary responses (n x J) paired with person covariates (n x K).
class Dataset {
 public:
  Dataset(Eigen::MatrixXd responses, Eigen::MatrixXd covariates);
  Dataset(Eigen::MatrixXd responses, Eigen::MatrixXd covariates,
          std::vector<std::string> covariate_names);

  Eigen::Index num_persons() const { return responses_.rows(); }
  Eigen::Index num_items() const { return responses_.cols(); }
  Eigen::Index num_covariates() const { return covariates_.cols(); }

  const Eigen::MatrixXd& responses() const { return responses_; }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  /// Rows in the given order (duplicates allowed).
  Dataset select_rows(const std::vector<Eigen::Index>& rows) const;
  /// Items (columns of Y) in the given order.
  Dataset select_items(const std::vector<Eigen::Index>& items) const;

 private:
  Eigen::MatrixXd responses_;
  Eigen::MatrixXd covariates_;
  std::vector<std::string> covariate_names_;
};

}  // namespace regdif
