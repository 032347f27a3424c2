#include <CLI11.hpp>

#include "experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"NV ensemble / dielectric resonator simulation toolkit"};
  app.require_subcommand(1);

  nvdr::cli::RunOptions run_options;
  auto* run = app.add_subcommand("run", "run an experiment described by a config file");
  run->add_option("--config", run_options.config_path, "experiment config (JSON)")
      ->required();
  run->add_option("--out", run_options.output_dir, "override the config's output_dir");
  auto* run_seed = run->add_option("--seed", run_options.seed, "fit search seed");
  run->add_flag("--best-effort", run_options.best_effort,
                "exit 0 even when a fit does not converge");

  nvdr::cli::FitOptions fit_options;
  auto* fit = app.add_subcommand("fit", "fit a model to a CSV dataset");
  fit->add_option("data", fit_options.data_path, "input CSV")->required();
  fit->add_option("--model", fit_options.model,
                  "sinusoid | hahn | lorentzian | sqrtp | s11")
      ->required();
  fit->add_option("--seed", fit_options.seed, "fit search seed");
  fit->add_option("--out", fit_options.output_path, "also write the JSON result here");
  fit->add_flag("--best-effort", fit_options.best_effort,
                "exit 0 even when the fit does not converge");

  nvdr::cli::BudgetOptions budget_options;
  auto* budget = app.add_subcommand("budget", "microwave loss chain and conversion");
  budget->add_option("--chain", budget_options.chain_path, "loss chain JSON")->required();
  budget->add_option("--power-w", budget_options.source_power_w, "source power in W");
  budget->add_option("--slope", budget_options.slope_mhz_per_sqrtw,
                     "measured Rabi slope in MHz per sqrt(W)");
  budget->add_option("--alpha", budget_options.alpha_deg,
                     "drive/axis angle in degrees (default: tetrahedral)");
  budget->add_option("--gamma-e", budget_options.gamma_e_mhz_per_mt,
                     "gyromagnetic ratio in MHz/mT");

  nvdr::cli::RunOptions loop_options;
  auto* loop = app.add_subcommand("tune-loop", "closed-loop thermal tuning simulation");
  loop->add_option("--config", loop_options.config_path, "tune-loop config (JSON)")
      ->required();
  loop->add_option("--out", loop_options.output_dir, "override the config's output_dir");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    run_options.seed_given = run_seed->count() > 0;
    return nvdr::cli::run_experiment(run_options);
  }
  if (fit->parsed()) return nvdr::cli::run_fit(fit_options);
  if (budget->parsed()) return nvdr::cli::run_budget(budget_options);
  if (loop->parsed()) return nvdr::cli::run_experiment(loop_options);
  return nvdr::cli::kExitConfig;
}
