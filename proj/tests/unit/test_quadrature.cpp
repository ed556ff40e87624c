#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "regdif/errors.hpp"
#include "regdif/quadrature.hpp"

using namespace regdif;

TEST_CASE("Hermite rule agrees with the Golub-Welsch eigen construction") {
  for (int q : {1, 2, 3, 5, 10, 15, 21, 49, 101, 201}) {
    const HermiteRule r = gauss_hermite(q);
    const oracle::Rule o = oracle::golub_welsch(q);
    REQUIRE(r.size() == q);
    for (int k = 0; k < q; ++k) {
      CHECK(r.nodes[k] == doctest::Approx(o.nodes[k]).epsilon(1e-10));
      CHECK(std::abs(r.weights[k] - o.weights[k]) < 1e-12 + 1e-9 * o.weights[k]);
    }
    CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
    for (int k = 1; k < q; ++k) CHECK(r.nodes[k] > r.nodes[k - 1]);
    CHECK((r.weights.array() > 0).all());
  }
}

TEST_CASE("Hermite rule rejects a nonpositive size") {
  CHECK_THROWS(gauss_hermite(0));
}

TEST_CASE("one- and two-point grids") {
  const PopulationParams pop = PopulationParams::zero(3);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 3);
  const QuadratureGrid g1 = build_quadrature(1, pop, x);
  CHECK(g1.node(0, 0) == 0.0);
  CHECK(g1.weight(0) == doctest::Approx(1.0));
  const QuadratureGrid g2 = build_quadrature(2, pop, x);
  CHECK(g2.node(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(g2.node(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(g2.weight(0) == doctest::Approx(0.5));
  CHECK(g2.weight(1) == doctest::Approx(0.5));
}

TEST_CASE("latent moments") {
  PopulationParams pop = PopulationParams::zero(3);
  Eigen::Vector3d x(0, 0, 0);
  LatentMoments m = latent_moments(x, pop);
  CHECK(m.mean == 0.0);
  CHECK(m.variance == 1.0);
  pop.mean_effects << -0.2, -0.2, -0.2;
  pop.logvar_effects << -0.1, 0.3, 0.1;
  m = latent_moments(Eigen::Vector3d(1, 0, 0), pop);
  CHECK(m.mean == doctest::Approx(-0.2));
  CHECK(m.variance == doctest::Approx(0.904837418).epsilon(1e-9));
  m = latent_moments(Eigen::Vector3d(1, 1, 1), pop);
  CHECK(m.mean == doctest::Approx(-0.6));
  CHECK(m.variance == doctest::Approx(1.349858808).epsilon(1e-9));
  pop.logvar_effects << 1000, 0, 0;
  CHECK_THROWS_AS(latent_moments(Eigen::Vector3d(1, 0, 0), pop), NumericalError);
}

TEST_CASE("Q=49 grids reproduce the latent mean and variance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PopulationParams pop = PopulationParams::zero(3);
  for (int k = 0; k < 3; ++k) {
    pop.mean_effects[k] = u(rng);
    pop.logvar_effects[k] = u(rng);
  }
  Eigen::MatrixXd x(50, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * u(rng);
  const QuadratureGrid g = build_quadrature(49, pop, x);
  for (Eigen::Index i = 0; i < 50; ++i) {
    const LatentMoments m = latent_moments(x.row(i).transpose(), pop);
    double s0 = 0, s1 = 0, s2 = 0;
    for (Eigen::Index q = 0; q < 49; ++q) {
      s0 += g.weight(q);
      s1 += g.weight(q) * g.node(i, q);
      s2 += g.weight(q) * (g.node(i, q) - m.mean) * (g.node(i, q) - m.mean);
    }
    CHECK(std::abs(s0 - 1.0) < 1e-10);
    CHECK(std::abs(s1 - m.mean) < 1e-8);
    CHECK(std::abs(s2 - m.variance) < 1e-8);
  }
}
