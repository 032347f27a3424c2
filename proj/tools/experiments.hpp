#pragma once

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>

namespace nvdr::cli {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;      // schema/validation/data errors
inline constexpr int kExitNonConverged = 3;

/// Configuration or input-data problem, annotated with the JSON path of the
/// offending element.
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what) {}
};

struct RunOptions {
  std::string config_path;
  std::string output_dir;   // overrides the config's output_dir when set
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool best_effort = false;
};

/// Executes the experiment described by a config file; returns an exit code.
int run_experiment(const RunOptions& options);

/// Executes an already-parsed experiment config (no file involvement).
int run_experiment_json(const nlohmann::json& config, const RunOptions& options);

struct FitOptions {
  std::string data_path;
  std::string model;  // sinusoid | hahn | lorentzian | sqrtp | s11
  std::uint64_t seed = 0;
  bool best_effort = false;
  std::string output_path;  // optional JSON destination besides stdout
};

int run_fit(const FitOptions& options);

struct BudgetOptions {
  std::string chain_path;
  double source_power_w = 0.0;  // <= 0: skip delivered-power output
  double slope_mhz_per_sqrtw = 211.6;
  double alpha_deg = 0.0;  // <= 0: exact tetrahedral angle
  double gamma_e_mhz_per_mt = 28.024;
};

int run_budget(const BudgetOptions& options);

}  // namespace nvdr::cli
