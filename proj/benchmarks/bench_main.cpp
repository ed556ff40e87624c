#include <benchmark/benchmark.h>

#include "regdif/em.hpp"
#include "regdif/inference.hpp"
#include "regdif/likelihood.hpp"
#include "regdif/quadrature.hpp"
#include "regdif/simulation.hpp"

using namespace regdif;

namespace {

// standard 12-item model, 25% DIF, fixed seed per sample size.
struct Fixture {
  explicit Fixture(Eigen::Index n)
      : truth(TrueModel::standard(DifCondition::kQuarter)),
        data([&] {
          Rng rng(1234 + static_cast<std::uint64_t>(n));
          Eigen::MatrixXd x = generate_covariates(n, rng);
          Eigen::MatrixXd y = generate_responses(x, truth, rng);
          return Dataset(std::move(y), std::move(x));
        }()),
        grid(build_quadrature(49, truth.params.population, data.covariates())) {}

  TrueModel truth;
  Dataset data;
  QuadratureGrid grid;
};

const Fixture& fixture(Eigen::Index n) {
  static Fixture f500(500), f2500(2500);
  return n == 500 ? f500 : f2500;
}

void BM_GaussHermite(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gauss_hermite(q));
}
BENCHMARK(BM_GaussHermite)->Arg(21)->Arg(49)->Arg(101);

void BM_BuildGrid(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(build_quadrature(49, f.truth.params.population, f.data.covariates()));
}
BENCHMARK(BM_BuildGrid)->Arg(500)->Arg(2500);

void BM_MarginalLoglik(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(marginal_loglik(f.truth.params, f.data, f.grid));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MarginalLoglik)->Arg(500)->Arg(2500);

void BM_LossGradient(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(loss_gradient(f.truth.params, f.data, f.grid));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossGradient)->Arg(500)->Arg(2500);

void BM_ScoreRows(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(score_vector(f.truth.params, f.data, f.grid));
}
BENCHMARK(BM_ScoreRows)->Arg(500)->Arg(2500);

void BM_EStep(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(e_step(f.truth.params, f.data, f.grid));
}
BENCHMARK(BM_EStep)->Arg(500)->Arg(2500);

void BM_ItemMStep(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  const EStep e = e_step(f.truth.params, f.data, f.grid);
  const double lambda = select_lambda(f.data.num_persons(), 0.6883);
  const ItemConstraint constraint = ItemConstraint::lasso(f.data.num_covariates());
  const ItemParams start = ParamVector::neutral(12, 3).items[0];
  for (auto _ : state)
    benchmark::DoNotOptimize(
        m_step_item(e.weights, f.data, f.grid, 0, lambda, start, 1e-8, constraint));
}
BENCHMARK(BM_ItemMStep)->Arg(500)->Arg(2500)->Unit(benchmark::kMillisecond);

void BM_ObservedInformation(benchmark::State& state) {
  const Fixture& f = fixture(500);
  for (auto _ : state)
    benchmark::DoNotOptimize(observed_information(f.truth.params, f.data, f.grid));
}
BENCHMARK(BM_ObservedInformation)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_PenalizedFit(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0));
  const PenaltyConfig penalty =
      PenaltyConfig::lasso(f.truth.params.layout(), select_lambda(f.data.num_persons(), 0.6883));
  EmConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(penalized_em_fit(f.data, penalty, cfg));
}
BENCHMARK(BM_PenalizedFit)->Arg(500)->Unit(benchmark::kMillisecond)->Iterations(1);

void BM_DscoreItem(benchmark::State& state) {
  const Fixture& f = fixture(500);
  const ParamLayout layout = f.truth.params.layout();
  const double lambda = select_lambda(500, 0.6883);
  const FitResult fit = penalized_em_fit(f.data, PenaltyConfig::lasso(layout, lambda), EmConfig{});
  const InferenceContext ctx = prepare_inference(fit, f.data);
  const FocalSpec focal = FocalSpec::item_dif(layout, 0);
  for (auto _ : state) benchmark::DoNotOptimize(dscore_test(ctx, f.data, focal, lambda));
}
BENCHMARK(BM_DscoreItem)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace
