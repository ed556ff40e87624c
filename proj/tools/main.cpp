#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace regdif::cli;

namespace {

void add_em_options(CLI::App* cmd, regdif::EmConfig& em) {
  cmd->add_option("--q", em.quadrature_nodes, "Gauss-Hermite nodes per person")->capture_default_str();
  cmd->add_option("--em-tol", em.em_tol, "stop when the penalized loss changes by less")
      ->capture_default_str();
  cmd->add_option("--mstep-tol", em.mstep_tol, "M-step tolerance")->capture_default_str();
  cmd->add_option("--max-iter", em.max_iter, "EM iteration cap")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regdif: penalized EM for DIF in moderated IRT models, with decorrelated score inference"};
  app.require_subcommand(1);
  app.set_version_flag("--version", REGDIF_VERSION);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "simulate a dataset from the built-in 12-item true model");
  g->add_option("--n", gen.n, "number of persons")->required();
  g->add_option("--condition", gen.dif_condition, "percentage of DIF items: 0, 25 or 50")
      ->capture_default_str();
  g->add_option("--seed", gen.seed, "RNG seed (REGDIF_SEED overrides)")->capture_default_str();
  g->add_option("--out", gen.out_dir, "output directory")->required();

  FitOptions fit;
  double lambda = 0.0, lambda_c = 0.0;
  auto* f = app.add_subcommand("fit", "penalized EM fit");
  f->add_option("--responses", fit.responses, "responses.csv (0/1, one column per item)")
      ->required()
      ->check(CLI::ExistingFile);
  f->add_option("--covariates", fit.covariates, "covariates.csv (one column per covariate)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* lam = f->add_option("--lambda", lambda, "L1 penalty");
  auto* lamc = f->add_option("--lambda-c", lambda_c, "penalty constant c, lambda = c / sqrt(n)");
  lam->excludes(lamc);
  f->add_option("--anchor", fit.anchors, "anchor items (1-based), DIF fixed at 0")->delimiter(',');
  f->add_option("--fix-zero", fit.fix_zero, "coordinate names fixed at 0")->delimiter(',');
  add_em_options(f, fit.em);
  f->add_option("--out", fit.out_dir, "output directory")->required();

  TestOptions test;
  double lambda_prime = 0.0;
  auto* t = app.add_subcommand("test", "DIF tests on a fitted model");
  t->add_option("--fit", test.fit, "fit.json from the fit command")->required()->check(CLI::ExistingFile);
  t->add_option("--responses", test.responses)->required()->check(CLI::ExistingFile);
  t->add_option("--covariates", test.covariates)->required()->check(CLI::ExistingFile);
  t->add_option("--item", test.items, "item-level test (1-based)")->delimiter(',');
  t->add_option("--coord", test.coordinates, "single-coordinate test by name")->delimiter(',');
  t->add_option("--method", test.method, "dscore or wald")->capture_default_str();
  auto* lp = t->add_option("--lambda-prime", lambda_prime, "projection penalty (default: fit lambda)");
  t->add_option("--alpha", test.alpha)->capture_default_str();
  t->add_option("--out", test.out_dir, "output directory")->required();

  SimulateOptions sim;
  sim.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::uint64_t sim_seed = 0;
  auto* s = app.add_subcommand("simulate", "Monte Carlo study over reg-dif, refit, dscore, oracle");
  s->add_option("--config", sim.config, "study configuration (JSON)")->required()->check(CLI::ExistingFile);
  s->add_option("--out", sim.out_dir, "output directory")->required();
  s->add_option("--jobs", sim.jobs, "worker threads")->capture_default_str();
  auto* ss = s->add_option("--seed", sim_seed, "root seed, overrides the config and REGDIF_SEED");
  s->add_flag("--quiet", sim.quiet, "no progress lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  if (*g) return run_guarded([&] { cmd_generate(gen); });
  if (*f) {
    if (*lam) fit.lambda = lambda;
    if (*lamc) fit.lambda_constant = lambda_c;
    return run_guarded([&] { cmd_fit(fit); });
  }
  if (*t) {
    if (*lp) test.lambda_prime = lambda_prime;
    return run_guarded([&] { cmd_test(test); });
  }
  if (*ss) sim.seed = sim_seed;
  return run_guarded([&] { cmd_simulate(sim); });
}
