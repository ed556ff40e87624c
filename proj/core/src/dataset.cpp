#include "regdif/dataset.hpp"

#include <cmath>
#include <stdexcept>

#include "regdif/params.hpp"

namespace regdif {

Dataset::Dataset(Eigen::MatrixXd responses, Eigen::MatrixXd covariates)
    : Dataset(responses, covariates,
              ParamLayout(responses.cols(), covariates.cols()).covariate_names()) {}

Dataset::Dataset(Eigen::MatrixXd responses, Eigen::MatrixXd covariates,
                 std::vector<std::string> covariate_names)
    : responses_(std::move(responses)),
      covariates_(std::move(covariates)),
      covariate_names_(std::move(covariate_names)) {
  if (responses_.rows() < 1) throw std::invalid_argument("Dataset: need at least one person");
  if (covariates_.rows() != responses_.rows())
    throw std::invalid_argument("Dataset: responses have " + std::to_string(responses_.rows()) +
                                " rows but covariates have " +
                                std::to_string(covariates_.rows()));
  if (static_cast<Eigen::Index>(covariate_names_.size()) != covariates_.cols())
    throw std::invalid_argument("Dataset: covariate name count does not match columns");
  for (Eigen::Index i = 0; i < responses_.rows(); ++i)
    for (Eigen::Index j = 0; j < responses_.cols(); ++j) {
      const double y = responses_(i, j);
      if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("Dataset: response (" + std::to_string(i + 1) + ", " +
                                    std::to_string(j + 1) + ") is not 0/1");
    }
  if (!covariates_.allFinite()) throw std::invalid_argument("Dataset: non-finite covariate");
}

Dataset Dataset::select_rows(const std::vector<Eigen::Index>& rows) const {
  Eigen::MatrixXd y(rows.size(), num_items());
  Eigen::MatrixXd x(rows.size(), num_covariates());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y.row(r) = responses_.row(rows[r]);
    x.row(r) = covariates_.row(rows[r]);
  }
  return {std::move(y), std::move(x), covariate_names_};
}

Dataset Dataset::select_items(const std::vector<Eigen::Index>& items) const {
  Eigen::MatrixXd y(num_persons(), items.size());
  for (std::size_t c = 0; c < items.size(); ++c) y.col(c) = responses_.col(items[c]);
  return {std::move(y), covariates_, covariate_names_};
}

}  // namespace regdif
