#include "regdif/params.hpp"

#include <cmath>
#include <stdexcept>

namespace regdif {

ItemParams ItemParams::neutral(Eigen::Index num_covariates) {
  ItemParams item;
  item.intercept_dif = Eigen::VectorXd::Zero(num_covariates);
  item.slope_dif = Eigen::VectorXd::Zero(num_covariates);
  return item;
}

double ItemParams::slope_at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return slope + slope_dif.dot(x);
}

double ItemParams::intercept_at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return intercept + intercept_dif.dot(x);
}

bool ItemParams::has_dif() const {
  return (intercept_dif.array() != 0.0).any() || (slope_dif.array() != 0.0).any();
}

PopulationParams PopulationParams::zero(Eigen::Index num_covariates) {
  return {Eigen::VectorXd::Zero(num_covariates), Eigen::VectorXd::Zero(num_covariates)};
}

namespace {

std::vector<std::string> default_covariate_names(Eigen::Index k) {
  if (k == 3) return {"age", "gender", "product"};
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < k; ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

}  // namespace

ParamLayout::ParamLayout(Eigen::Index num_items, Eigen::Index num_covariates)
    : ParamLayout(num_items, default_covariate_names(num_covariates)) {}

ParamLayout::ParamLayout(Eigen::Index num_items, std::vector<std::string> covariate_names)
    : num_items_(num_items),
      num_covariates_(static_cast<Eigen::Index>(covariate_names.size())),
      covariate_names_(std::move(covariate_names)) {
  if (num_items_ < 0) throw std::invalid_argument("ParamLayout: negative item count");
}

Eigen::Index ParamLayout::dimension() const {
  return num_items_ * item_block_size() + 2 * num_covariates_;
}

Eigen::Index ParamLayout::slope(Eigen::Index item) const { return item * item_block_size(); }
Eigen::Index ParamLayout::intercept(Eigen::Index item) const {
  return item * item_block_size() + 1;
}
Eigen::Index ParamLayout::intercept_dif(Eigen::Index item, Eigen::Index k) const {
  return item * item_block_size() + 2 + k;
}
Eigen::Index ParamLayout::slope_dif(Eigen::Index item, Eigen::Index k) const {
  return item * item_block_size() + 2 + num_covariates_ + k;
}
Eigen::Index ParamLayout::mean_effect(Eigen::Index k) const {
  return num_items_ * item_block_size() + k;
}
Eigen::Index ParamLayout::logvar_effect(Eigen::Index k) const {
  return num_items_ * item_block_size() + num_covariates_ + k;
}

std::vector<Eigen::Index> ParamLayout::dif_indices(Eigen::Index item) const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index k = 0; k < 2 * num_covariates_; ++k)
    out.push_back(item * item_block_size() + 2 + k);
  return out;
}

std::vector<Eigen::Index> ParamLayout::item_indices(Eigen::Index item) const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index k = 0; k < item_block_size(); ++k)
    out.push_back(item * item_block_size() + k);
  return out;
}

std::vector<Eigen::Index> ParamLayout::population_indices() const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index k = 0; k < 2 * num_covariates_; ++k)
    out.push_back(num_items_ * item_block_size() + k);
  return out;
}

std::vector<Eigen::Index> ParamLayout::all_dif_indices() const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < num_items_; ++j) {
    auto block = dif_indices(j);
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

bool ParamLayout::is_dif(Eigen::Index index) const {
  if (index < 0 || index >= num_items_ * item_block_size()) return false;
  return index % item_block_size() >= 2;
}

Eigen::Index ParamLayout::item_of(Eigen::Index index) const {
  if (index < 0 || index >= num_items_ * item_block_size()) return -1;
  return index / item_block_size();
}

std::string ParamLayout::name(Eigen::Index index) const {
  if (index < 0 || index >= dimension())
    throw std::out_of_range("ParamLayout::name: index " + std::to_string(index));
  const Eigen::Index items_end = num_items_ * item_block_size();
  if (index < items_end) {
    const Eigen::Index j = index / item_block_size();
    const Eigen::Index r = index % item_block_size();
    const std::string prefix = "item" + std::to_string(j + 1) + "_";
    if (r == 0) return prefix + "a";
    if (r == 1) return prefix + "d";
    if (r < 2 + num_covariates_) return prefix + "beta0_" + covariate_names_[r - 2];
    return prefix + "beta1_" + covariate_names_[r - 2 - num_covariates_];
  }
  const Eigen::Index r = index - items_end;
  if (r < num_covariates_) return "pop_gamma_" + covariate_names_[r];
  return "pop_delta_" + covariate_names_[r - num_covariates_];
}

std::vector<std::string> ParamLayout::names() const {
  std::vector<std::string> out;
  out.reserve(dimension());
  for (Eigen::Index i = 0; i < dimension(); ++i) out.push_back(name(i));
  return out;
}

Eigen::Index ParamLayout::index_of(const std::string& coordinate) const {
  for (Eigen::Index i = 0; i < dimension(); ++i)
    if (name(i) == coordinate) return i;
  throw std::invalid_argument("unknown coordinate name '" + coordinate + "'");
}

ParamVector ParamVector::neutral(Eigen::Index num_items, Eigen::Index num_covariates) {
  ParamVector p;
  p.items.assign(num_items, ItemParams::neutral(num_covariates));
  p.population = PopulationParams::zero(num_covariates);
  return p;
}

Eigen::VectorXd ParamVector::flatten() const {
  const ParamLayout lay = layout();
  Eigen::VectorXd flat(lay.dimension());
  const Eigen::Index k = num_covariates();
  for (Eigen::Index j = 0; j < num_items(); ++j) {
    const auto& item = items[j];
    flat[lay.slope(j)] = item.slope;
    flat[lay.intercept(j)] = item.intercept;
    flat.segment(lay.intercept_dif(j, 0), k) = item.intercept_dif;
    flat.segment(lay.slope_dif(j, 0), k) = item.slope_dif;
  }
  flat.segment(lay.mean_effect(0), k) = population.mean_effects;
  flat.segment(lay.logvar_effect(0), k) = population.logvar_effects;
  return flat;
}

ParamVector ParamVector::unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat,
                                   const ParamLayout& layout) {
  if (flat.size() != layout.dimension())
    throw std::invalid_argument("unflatten: vector length " + std::to_string(flat.size()) +
                                " does not match layout dimension " +
                                std::to_string(layout.dimension()));
  const Eigen::Index k = layout.num_covariates();
  ParamVector p;
  p.items.resize(layout.num_items());
  for (Eigen::Index j = 0; j < layout.num_items(); ++j) {
    auto& item = p.items[j];
    item.slope = flat[layout.slope(j)];
    item.intercept = flat[layout.intercept(j)];
    item.intercept_dif = flat.segment(layout.intercept_dif(j, 0), k);
    item.slope_dif = flat.segment(layout.slope_dif(j, 0), k);
  }
  p.population.mean_effects = flat.segment(layout.mean_effect(0), k);
  p.population.logvar_effects = flat.segment(layout.logvar_effect(0), k);
  return p;
}

void ParamVector::validate() const {
  const Eigen::Index k = num_covariates();
  if (population.logvar_effects.size() != k)
    throw std::invalid_argument("population gamma and delta lengths differ");
  if (!population.mean_effects.allFinite() || !population.logvar_effects.allFinite())
    throw std::invalid_argument("population parameters must be finite");
  for (std::size_t j = 0; j < items.size(); ++j) {
    const auto& item = items[j];
    if (item.intercept_dif.size() != k || item.slope_dif.size() != k)
      throw std::invalid_argument("item " + std::to_string(j + 1) +
                                  ": DIF vectors must have length K=" + std::to_string(k));
    if (!std::isfinite(item.slope) || !std::isfinite(item.intercept) ||
        !item.intercept_dif.allFinite() || !item.slope_dif.allFinite())
      throw std::invalid_argument("item " + std::to_string(j + 1) +
                                  ": parameters must be finite");
  }
}

}  // namespace regdif
