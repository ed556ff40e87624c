#include "doctest.h"

#include <random>
#include <set>
#include <stdexcept>

#include "oracles.hpp"
#include "regdif/dataset.hpp"
#include "regdif/params.hpp"

using namespace regdif;

TEST_CASE("layout dimension and flattening order") {
  const ParamLayout layout(12, 3);
  CHECK(layout.dimension() == 12 * (2 + 6) + 6);
  CHECK(layout.slope(0) == 0);
  CHECK(layout.intercept(0) == 1);
  CHECK(layout.intercept_dif(0, 0) == 2);
  CHECK(layout.slope_dif(0, 2) == 7);
  CHECK(layout.slope(1) == 8);
  CHECK(layout.mean_effect(0) == 96);
  CHECK(layout.logvar_effect(2) == 101);
}

TEST_CASE("coordinate names are bijective with indices") {
  const ParamLayout layout(12, 3);
  const auto names = layout.names();
  std::set<std::string> unique(names.begin(), names.end());
  CHECK(unique.size() == names.size());
  for (Eigen::Index k = 0; k < layout.dimension(); ++k) CHECK(layout.index_of(names[k]) == k);
  CHECK(layout.name(layout.slope_dif(2, 1)) == "item3_beta1_gender");
  CHECK(layout.name(layout.intercept_dif(0, 2)) == "item1_beta0_product");
  CHECK(layout.name(layout.mean_effect(0)) == "pop_gamma_age");
  CHECK(layout.name(layout.logvar_effect(1)) == "pop_delta_gender");
  CHECK(layout.name(layout.slope(11)) == "item12_a");
  CHECK_THROWS_AS(layout.index_of("item13_a"), std::invalid_argument);
}

TEST_CASE("index sets partition the parameter vector") {
  const ParamLayout layout(4, 2);
  std::vector<int> seen(layout.dimension(), 0);
  for (Eigen::Index j = 0; j < 4; ++j)
    for (Eigen::Index k : layout.item_indices(j)) ++seen[k];
  for (Eigen::Index k : layout.population_indices()) ++seen[k];
  for (int s : seen) CHECK(s == 1);
  CHECK(layout.all_dif_indices().size() == 4 * 4);
  for (Eigen::Index k : layout.all_dif_indices()) CHECK(layout.is_dif(k));
  CHECK_FALSE(layout.is_dif(layout.slope(2)));
  CHECK(layout.item_of(layout.intercept_dif(3, 1)) == 3);
  CHECK(layout.item_of(layout.mean_effect(0)) == -1);
}

TEST_CASE("flatten and unflatten round trip") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const ParamVector p = oracle::random_params(1 + rep % 5, rep % 4, rng);
    const Eigen::VectorXd flat = p.flatten();
    CHECK(flat.size() == p.layout().dimension());
    const ParamVector back = ParamVector::unflatten(flat, p.layout());
    CHECK(back.flatten() == flat);
  }
}

TEST_CASE("param validation rejects non-finite and ragged input") {
  ParamVector p = ParamVector::neutral(2, 2);
  CHECK_NOTHROW(p.validate());
  p.items[1].slope_dif[0] = std::nan("");
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = ParamVector::neutral(2, 2);
  p.items[0].intercept_dif.resize(1);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("dataset validation") {
  Eigen::MatrixXd y(2, 2);
  y << 0, 1, 1, 1;
  Eigen::MatrixXd x(2, 1);
  x << 0.5, -1;
  CHECK_NOTHROW(Dataset(y, x));
  Eigen::MatrixXd bad = y;
  bad(0, 0) = 0.5;
  CHECK_THROWS_AS(Dataset(bad, x), std::invalid_argument);
  CHECK_THROWS_AS(Dataset(y, Eigen::MatrixXd::Zero(3, 1)), std::invalid_argument);
  Eigen::MatrixXd xnan = x;
  xnan(1, 0) = std::nan("");
  CHECK_THROWS_AS(Dataset(y, xnan), std::invalid_argument);
  CHECK_THROWS_AS(Dataset(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 1)), std::invalid_argument);
  CHECK_NOTHROW(Dataset(y, Eigen::MatrixXd(2, 0)));

  const Dataset d(y, x);
  const Dataset dup = d.select_rows({0, 0, 1});
  CHECK(dup.num_persons() == 3);
  CHECK(dup.responses()(1, 1) == 1.0);
  CHECK(d.select_items({1}).responses().col(0) == y.col(1));
}
