#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

#include "nvdr/ensemble.hpp"
#include "nvdr/field.hpp"
#include "nvdr/fitting.hpp"
#include "nvdr/io.hpp"
#include "nvdr/power.hpp"
#include "nvdr/resonator.hpp"

namespace nvdr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Schema helpers: every accessor carries the JSON path for diagnostics.
// ---------------------------------------------------------------------------

const json& require(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError(path, "missing required key '" + key + "'");
  return j.at(key);
}

double number_at(const json& j, const std::string& path, const std::string& key,
                 double fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(path + "." + key, "expected a number");
  return v.get<double>();
}

double number_req(const json& j, const std::string& path, const std::string& key) {
  const json& v = require(j, path, key);
  if (!v.is_number()) throw ConfigError(path + "." + key, "expected a number");
  return v.get<double>();
}

int integer_at(const json& j, const std::string& path, const std::string& key,
               int fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + "." + key, "expected an integer");
  return v.get<int>();
}

std::string string_req(const json& j, const std::string& path, const std::string& key) {
  const json& v = require(j, path, key);
  if (!v.is_string()) throw ConfigError(path + "." + key, "expected a string");
  return v.get<std::string>();
}

std::vector<double> number_list(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(path, "expected numbers only");
    out.push_back(e.get<double>());
  }
  return out;
}

Vec3 vec3_at(const json& j, const std::string& path, const std::string& key,
             const Vec3& fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const auto v = number_list(j.at(key), path + "." + key);
  if (v.size() != 3) throw ConfigError(path + "." + key, "expected 3 components");
  return {v[0], v[1], v[2]};
}

// Axis values either listed explicitly or spanned as {min, max, count}.
std::vector<double> axis_values(const json& j, const std::string& path,
                                const std::string& key) {
  const json& v = require(j, path, key);
  if (v.is_array()) return number_list(v, path + "." + key);
  if (v.is_object()) {
    const double lo = number_req(v, path + "." + key, "min");
    const double hi = number_req(v, path + "." + key, "max");
    const int count = integer_at(v, path + "." + key, "count", 0);
    if (count < 2) throw ConfigError(path + "." + key + ".count", "need >= 2");
    std::vector<double> out(count);
    for (int i = 0; i < count; ++i) out[i] = lo + (hi - lo) * i / (count - 1);
    return out;
  }
  throw ConfigError(path + "." + key, "expected an array or {min,max,count}");
}

// ---------------------------------------------------------------------------
// Shared experiment blocks
// ---------------------------------------------------------------------------

SpinParams parse_spin(const json& root) {
  SpinParams spin;
  if (!root.contains("spin")) return spin;
  const json& j = root.at("spin");
  spin.d_z_ghz = number_at(j, "spin", "d_z_ghz", spin.d_z_ghz);
  spin.hyperfine_mhz = number_at(j, "spin", "hyperfine_mhz", spin.hyperfine_mhz);
  spin.gamma_e_mhz_per_mt =
      number_at(j, "spin", "gamma_e_mhz_per_mt", spin.gamma_e_mhz_per_mt);
  try {
    spin.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("spin", e.what());
  }
  return spin;
}

Vec3 parse_static_field(const json& root) {
  if (!root.contains("static_field")) return {0.0, 0.0, 5.031};
  const json& j = root.at("static_field");
  if (j.contains("vector_mt")) {
    return vec3_at(j, "static_field", "vector_mt", {});
  }
  const double magnitude = number_at(j, "static_field", "magnitude_mt", 5.031);
  const double tilt_deg = number_at(j, "static_field", "tilt_deg", 0.0);
  const double t = tilt_deg * std::numbers::pi / 180.0;
  return {magnitude * std::sin(t), 0.0, magnitude * std::cos(t)};
}

B1Field parse_field(const json& root, const fs::path& base_dir) {
  if (!root.contains("field")) return ParametricB1{};
  const json& j = root.at("field");
  if (j.contains("grid_file")) {
    const std::string rel = string_req(j, "field", "grid_file");
    const fs::path path = fs::path(rel).is_absolute() ? fs::path(rel) : base_dir / rel;
    try {
      return FieldGrid::load(path.string());
    } catch (const std::exception& e) {
      throw ConfigError("field.grid_file", e.what());
    }
  }
  ParametricB1 src;
  if (j.contains("parametric")) {
    const json& p = j.at("parametric");
    src.b1_center_mt_per_sqrtw = number_at(p, "field.parametric",
                                           "b1_center_mt_per_sqrtw",
                                           src.b1_center_mt_per_sqrtw);
    src.falloff_scale_mm =
        number_at(p, "field.parametric", "falloff_scale_mm", src.falloff_scale_mm);
    src.tilt_deg = number_at(p, "field.parametric", "tilt_deg", src.tilt_deg);
  }
  try {
    src.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("field.parametric", e.what());
  }
  return src;
}

BeamModel parse_beam(const json& root) {
  BeamModel beam;
  if (!root.contains("beam")) return beam;
  const json& j = root.at("beam");
  beam.collimated_diameter_mm =
      number_at(j, "beam", "collimated_diameter_mm", beam.collimated_diameter_mm);
  beam.wavelength_nm = number_at(j, "beam", "wavelength_nm", beam.wavelength_nm);
  beam.focal_length_mm = number_at(j, "beam", "focal_length_mm", beam.focal_length_mm);
  beam.ellipticity_m = number_at(j, "beam", "ellipticity_m", beam.ellipticity_m);
  beam.mu_x_mm = number_at(j, "beam", "mu_x_mm", beam.mu_x_mm);
  beam.mu_y_mm = number_at(j, "beam", "mu_y_mm", beam.mu_y_mm);
  try {
    beam.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("beam", e.what());
  }
  return beam;
}

EnsembleParams parse_ensemble(const json& root) {
  EnsembleParams ens;
  if (!root.contains("ensemble")) return ens;
  const json& j = root.at("ensemble");
  ens.broadening_sigma_mhz =
      number_at(j, "ensemble", "broadening_sigma_mhz", ens.broadening_sigma_mhz);
  ens.n_detuning_samples =
      integer_at(j, "ensemble", "detuning_samples", ens.n_detuning_samples);
  ens.volume_min_mm = vec3_at(j, "ensemble", "volume_min_mm", ens.volume_min_mm);
  ens.volume_max_mm = vec3_at(j, "ensemble", "volume_max_mm", ens.volume_max_mm);
  if (j.contains("quadrature_points")) {
    const auto q = number_list(j.at("quadrature_points"), "ensemble.quadrature_points");
    if (q.size() != 3)
      throw ConfigError("ensemble.quadrature_points", "expected 3 integers");
    ens.quadrature_points = {int(q[0]), int(q[1]), int(q[2])};
  }
  ens.rng_seed = std::uint64_t(number_at(j, "ensemble", "rng_seed", 0.0));
  try {
    ens.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("ensemble", e.what());
  }
  return ens;
}

RabiExperiment parse_experiment(const json& root, const fs::path& base_dir) {
  RabiExperiment e;
  e.spin = parse_spin(root);
  e.b0_mt = parse_static_field(root);
  e.field = parse_field(root, base_dir);
  e.beam = parse_beam(root);
  e.ensemble = parse_ensemble(root);
  e.beam_origin_mm = vec3_at(root, "$", "beam_origin_mm", e.beam_origin_mm);
  if (root.contains("drive_freq_ghz")) {
    const json& v = root.at("drive_freq_ghz");
    if (v.is_number())
      e.drive_freq_ghz = v.get<double>();
    else if (!(v.is_string() && v.get<std::string>() == "auto"))
      throw ConfigError("drive_freq_ghz", "expected a number or \"auto\"");
  }
  if (root.contains("active_orientations")) {
    const auto list = number_list(root.at("active_orientations"), "active_orientations");
    e.active_orientations.clear();
    for (double v : list) e.active_orientations.push_back(int(v));
  }
  return e;
}

SweepFitOptions parse_fit_options(const json& root, std::uint64_t seed) {
  SweepFitOptions o;
  o.seed = seed;
  if (!root.contains("fit")) return o;
  const json& j = root.at("fit");
  o.periods = number_at(j, "fit", "periods", o.periods);
  o.samples_per_period = integer_at(j, "fit", "samples_per_period", o.samples_per_period);
  return o;
}

ResonatorState parse_resonator(const json& root) {
  const json& j = require(root, "$", "resonator");
  ResonatorState res;
  res.f0_ghz = number_at(j, "resonator", "f0_ghz", res.f0_ghz);
  res.q_internal = number_at(j, "resonator", "q_internal", res.q_internal);
  res.q_external = number_at(j, "resonator", "q_external", res.q_external);
  res.temperature_k = number_at(j, "resonator", "temperature_k", res.temperature_k);
  res.epsilon_r = number_at(j, "resonator", "epsilon_r", res.epsilon_r);
  try {
    res.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("resonator", e.what());
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

struct OutputDir {
  fs::path dir;
  std::vector<std::string> files;

  std::string file(const std::string& name) {
    files.push_back(name);
    return (dir / name).string();
  }
};

void write_metadata(OutputDir& out, const json& config, const json& extra) {
  json meta = {{"tool", tool_version()},
               {"config", config},
               {"outputs", out.files},
               {"results", extra}};
  std::ofstream stream(out.dir / "metadata.json");
  stream << meta.dump(2) << '\n';
}

json sweep_summary(const SweepResult& sweep) {
  int non_converged = 0;
  for (const auto& p : sweep.points)
    if (!p.converged) ++non_converged;
  return {{"points", sweep.points.size()}, {"non_converged", non_converged}};
}

bool all_converged(const SweepResult& sweep) {
  for (const auto& p : sweep.points)
    if (!p.converged) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Experiment kinds
// ---------------------------------------------------------------------------

int run_rabi(const json& config, OutputDir& out, std::uint64_t seed, bool best_effort,
             const fs::path& base_dir) {
  RabiExperiment e = parse_experiment(config, base_dir);
  const double power = number_req(config, "$", "power_w");
  const SweepFitOptions fit_options = parse_fit_options(config, seed);

  const double omega_pred = predicted_rabi_mhz(e, power);
  const int n_samples =
      integer_at(config, "$", "n_samples",
                 int(fit_options.periods * fit_options.samples_per_period));
  const double t_max =
      number_at(config, "$", "t_max_us", fit_options.periods / omega_pred);
  std::vector<double> t(n_samples);
  for (int i = 0; i < n_samples; ++i) t[i] = t_max * i / n_samples;

  RabiTrace trace = total_rabi_signal(e, t, power);

  const double noise_std = number_at(config, "$", "noise_std", 0.0);
  if (noise_std > 0) {
    std::mt19937_64 rng(e.ensemble.rng_seed ^ seed);
    std::uniform_real_distribution<double> u(1e-12, 1.0);
    for (auto& p : trace.population)
      p += noise_std * std::sqrt(-2.0 * std::log(u(rng))) *
           std::cos(2.0 * std::numbers::pi * u(rng));
  }

  write_trace_csv(out.file("trace.csv"), trace);
  const FitResult fit = fit_decaying_sinusoid(t, trace.population, seed);
  {
    std::ofstream stream(out.dir / "fit.json");
    out.files.push_back("fit.json");
    stream << fit_result_to_json(fit).dump(2) << '\n';
  }
  write_metadata(out, config,
                 {{"predicted_rabi_mhz", omega_pred},
                  {"fitted_rabi_mhz", fit.parameter("omega_r")},
                  {"converged", fit.converged}});
  return (fit.converged || best_effort) ? kExitOk : kExitNonConverged;
}

int run_power_sweep(const json& config, OutputDir& out, std::uint64_t seed,
                    bool best_effort, const fs::path& base_dir) {
  RabiExperiment e = parse_experiment(config, base_dir);
  std::vector<double> powers;
  const json& pj = require(config, "$", "powers_w");
  if (pj.is_array()) {
    powers = number_list(pj, "powers_w");
  } else if (pj.is_object()) {
    const double start = number_req(pj, "powers_w", "start_w");
    const int count = integer_at(pj, "powers_w", "count", 0);
    const double step_db = number_at(pj, "powers_w", "step_db", 6.0);
    if (count < 1) throw ConfigError("powers_w.count", "need >= 1");
    for (int i = 0; i < count; ++i)
      powers.push_back(start * std::pow(10.0, step_db * i / 10.0));
  } else {
    throw ConfigError("powers_w", "expected an array or {start_w, count, step_db}");
  }

  const SweepResult sweep =
      simulate_power_sweep(e, powers, parse_fit_options(config, seed));
  write_sweep_csv(out.file("sweep.csv"), sweep);

  // Conversion-slope summary over the converged points.
  json extra = sweep_summary(sweep);
  std::vector<double> ok_powers, ok_omegas;
  for (const auto& p : sweep.points) {
    if (p.converged) {
      ok_powers.push_back(p.axis_value);
      ok_omegas.push_back(p.omega_r_mhz);
    }
  }
  if (ok_powers.size() >= 3) {
    const FitResult line = fit_sqrt_power_line(ok_powers, ok_omegas);
    extra["slope_mhz_per_sqrtw"] = line.parameter("slope");
    extra["slope_ci95"] = line.ci("slope");
  }
  write_metadata(out, config, extra);
  return (all_converged(sweep) || best_effort) ? kExitOk : kExitNonConverged;
}

int run_chevron(const json& config, OutputDir& out, std::uint64_t seed, bool best_effort,
                const fs::path& base_dir) {
  RabiExperiment e = parse_experiment(config, base_dir);
  const ResonatorState res = parse_resonator(config);
  const double background = number_at(config, "$", "background", 0.142134);
  const double power = number_req(config, "$", "power_w");
  const auto detunings = axis_values(config, "$", "detunings_mhz");

  const SweepResult sweep = simulate_chevron(e, detunings, res, background, power,
                                             parse_fit_options(config, seed));
  write_sweep_csv(out.file("sweep.csv"), sweep);

  // Reflection trace of the configured resonator over the swept band.
  {
    std::ofstream stream(out.dir / "s11_theory.csv");
    out.files.push_back("s11_theory.csv");
    stream << "freq_ghz,re,im,magnitude_db,phase_rad\n";
    const double half_mhz =
        std::max(std::abs(detunings.front()), std::abs(detunings.back()));
    char buf[160];
    for (int i = 0; i <= 400; ++i) {
      const double f = res.f0_ghz + (2.0 * i / 400.0 - 1.0) * 2.0 * half_mhz * 1e-3;
      const auto gamma = s11_response(res, f);
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g,%.12g\n", f,
                    gamma.real(), gamma.imag(), 20.0 * std::log10(std::abs(gamma)),
                    std::arg(gamma));
      stream << buf;
    }
  }

  json extra = sweep_summary(sweep);
  std::vector<double> x, y;
  for (const auto& p : sweep.points) {
    if (p.converged) {
      x.push_back(p.axis_value);
      y.push_back(p.omega_r_mhz * p.omega_r_mhz);
    }
  }
  if (x.size() >= 5) {
    const FitResult lor = fit_lorentzian(x, y, seed);
    extra["omega_sq_fwhm_mhz"] = lor.parameter("fwhm");
    extra["implied_loaded_q"] = res.f0_ghz * 1e3 / lor.parameter("fwhm");
  }
  write_metadata(out, config, extra);
  return (all_converged(sweep) || best_effort) ? kExitOk : kExitNonConverged;
}

int run_position_sweep(const json& config, OutputDir& out, std::uint64_t seed,
                       bool best_effort, const fs::path& base_dir) {
  RabiExperiment e = parse_experiment(config, base_dir);
  const double power = number_req(config, "$", "power_w");
  const auto positions = axis_values(config, "$", "positions_mm");

  std::vector<double> s11(positions.size(), -1e12);
  if (config.contains("s11_db")) {
    const json& v = config.at("s11_db");
    if (v.is_number()) {
      s11.assign(positions.size(), v.get<double>());
    } else {
      s11 = number_list(v, "s11_db");
      if (s11.size() != positions.size())
        throw ConfigError("s11_db", "length must match positions_mm");
    }
  }

  const SweepResult sweep = simulate_position_sweep(e, positions, s11, power,
                                                    parse_fit_options(config, seed));
  write_sweep_csv(out.file("sweep.csv"), sweep);
  write_metadata(out, config, sweep_summary(sweep));
  return (all_converged(sweep) || best_effort) ? kExitOk : kExitNonConverged;
}

int run_odmr_map(const json& config, OutputDir& out) {
  const SpinParams spin = parse_spin(config);
  const ResonatorState res = parse_resonator(config);
  const double background = number_at(config, "$", "background", 0.142134);
  const double linewidth = number_at(config, "$", "linewidth_mhz", 2.0);
  const Vec3 b0_dir = vec3_at(config, "$", "b0_direction", {0, 0, 1});

  SaturationParams sat;
  if (config.contains("saturation")) {
    const json& j = config.at("saturation");
    sat.peak_rabi_mhz = number_at(j, "saturation", "peak_rabi_mhz", sat.peak_rabi_mhz);
    if (j.contains("target_signal_ratio")) {
      const double target = number_req(j, "saturation", "target_signal_ratio");
      const double on = enhancement_factor(res, 0.0, background);
      const double off = std::max(background, 1e-12);
      sat.s_sat_mhz = SaturationParams::calibrate_s_sat(sat.peak_rabi_mhz * off / on,
                                                        on / off, target);
    } else {
      sat.s_sat_mhz = number_at(j, "saturation", "s_sat_mhz", sat.s_sat_mhz);
    }
  }

  const auto b0_values = axis_values(config, "$", "b0_mt");
  const auto freqs = axis_values(config, "$", "mw_freqs_ghz");

  const OdmrMap map =
      simulate_odmr_map(spin, b0_dir, b0_values, freqs, res, background, sat, linewidth);
  write_odmr_csv(out.file("map.csv"), map);

  const auto integral = integrated_odmr_signal(map);
  {
    std::ofstream stream(out.dir / "integrated.csv");
    out.files.push_back("integrated.csv");
    stream << "b0_mt,integrated_signal\n";
    char buf[80];
    for (std::size_t i = 0; i < integral.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g\n", map.b0_mt[i], integral[i]);
      stream << buf;
    }
  }

  json extra = {{"s_sat_mhz", sat.s_sat_mhz}, {"peak_rabi_mhz", sat.peak_rabi_mhz}};
  if (integral.size() >= 5) {
    const FitResult lor = fit_lorentzian(map.b0_mt, integral);
    if (lor.converged && lor.parameter("offset") > 0) {
      extra["integrated_enhancement"] =
          (lor.parameter("offset") + lor.parameter("amplitude")) /
          lor.parameter("offset");
    }
  }
  write_metadata(out, config, extra);
  return kExitOk;
}

int run_tune_loop(const json& config, OutputDir& out, const fs::path& base_dir) {
  const json& pj = require(config, "$", "plant");
  ThermalPlant plant;
  plant.tau_thermal_s = number_at(pj, "plant", "tau_thermal_s", 3.0);
  auto resolve = [&](const std::string& rel) {
    const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base_dir / rel;
    return p.string();
  };
  try {
    plant.freq_vs_temp =
        CalibrationTable::load_csv(resolve(string_req(pj, "plant", "freq_vs_temp_csv")));
    plant.freq_vs_laser_power = CalibrationTable::load_csv(
        resolve(string_req(pj, "plant", "freq_vs_laser_power_csv")));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("plant", e.what());
  }

  ControllerState ctrl;
  if (config.contains("controller")) {
    const json& cj = config.at("controller");
    ctrl.k_p_mw_per_ghz =
        number_at(cj, "controller", "k_p_mw_per_ghz", ctrl.k_p_mw_per_ghz);
    ctrl.k_d_mw_s_per_ghz =
        number_at(cj, "controller", "k_d_mw_s_per_ghz", ctrl.k_d_mw_s_per_ghz);
    ctrl.setpoint_ghz = number_at(cj, "controller", "setpoint_ghz", ctrl.setpoint_ghz);
    ctrl.max_output_mw = number_at(cj, "controller", "max_output_mw", ctrl.max_output_mw);
  }

  const double dt = number_at(config, "$", "dt_s", plant.tau_thermal_s / 100.0);
  const int n_steps = integer_at(config, "$", "n_steps", 4000);
  const double f_initial =
      number_at(config, "$", "f_initial_ghz", plant.freq_vs_laser_power(0.0));

  double dist_t = 0.0, dist_delta = 0.0;
  if (config.contains("disturbance")) {
    const json& dj = config.at("disturbance");
    dist_t = number_at(dj, "disturbance", "t_s", 0.0);
    dist_delta = number_at(dj, "disturbance", "delta_ghz", 0.0);
  }
  auto disturbance = [&](double t) { return t >= dist_t ? dist_delta : 0.0; };

  const auto samples =
      simulate_tune_loop(plant, ctrl, f_initial, dt, n_steps, disturbance);
  write_tune_loop_csv(out.file("loop.csv"), samples);

  const double final_error = samples.empty() ? 0.0 : std::abs(samples.back().error_ghz);
  write_metadata(out, config,
                 {{"final_error_mhz", final_error * 1e3},
                  {"settled_within_half_mhz", final_error * 1e3 < 0.5}});
  return kExitOk;
}

int run_budget_kind(const json& config, OutputDir& out, const fs::path& base_dir) {
  LossChain chain;
  if (config.contains("chain_file")) {
    const std::string rel = string_req(config, "$", "chain_file");
    const fs::path path = fs::path(rel).is_absolute() ? fs::path(rel) : base_dir / rel;
    std::ifstream in(path);
    if (!in) throw ConfigError("chain_file", "cannot open " + path.string());
    try {
      chain = loss_chain_from_json(json::parse(in));
    } catch (const std::exception& e) {
      throw ConfigError("chain_file", e.what());
    }
  } else {
    try {
      chain = loss_chain_from_json(config);
    } catch (const std::exception& e) {
      throw ConfigError("$", e.what());
    }
  }

  json result = {{"chain_gain_db", chain_gain_db(chain)}};
  const double p_source = number_at(config, "$", "source_power_w", 0.0);
  if (p_source > 0) result["power_at_antenna_w"] = power_at_antenna_w(p_source, chain);

  const double slope = number_at(config, "$", "slope_mhz_per_sqrtw", 211.6);
  const double alpha = number_at(config, "$", "alpha_deg", tetrahedral_angle_deg());
  const double gamma = number_at(config, "$", "gamma_e_mhz_per_mt", 28.024);
  result["conversion"] = conversion_to_json(conversion_pipeline(slope, alpha, gamma));

  {
    std::ofstream stream(out.dir / "budget.json");
    out.files.push_back("budget.json");
    stream << result.dump(2) << '\n';
  }
  std::cout << result.dump(2) << '\n';
  write_metadata(out, config, result);
  return kExitOk;
}

int run_fit_kind(const json& config, OutputDir& out, std::uint64_t seed,
                 bool best_effort, const fs::path& base_dir) {
  FitOptions options;
  const std::string rel = string_req(config, "$", "data");
  const fs::path path = fs::path(rel).is_absolute() ? fs::path(rel) : base_dir / rel;
  options.data_path = path.string();
  options.model = string_req(config, "$", "model");
  options.seed = seed;
  options.best_effort = best_effort;
  options.output_path = (out.dir / "fit.json").string();
  out.files.push_back("fit.json");
  const int code = run_fit(options);
  if (code == kExitConfig) throw ConfigError("data", "fit input rejected");
  write_metadata(out, config, {{"model", options.model}});
  return code;
}

}  // namespace

int run_experiment_json(const json& config, const RunOptions& options) {
  if (!config.is_object()) throw ConfigError("$", "config root must be an object");
  const std::string kind = string_req(config, "$", "kind");

  static const std::vector<std::string> kKinds = {
      "rabi",     "power-sweep", "chevron", "position-sweep",
      "odmr-map", "tune-loop",   "fit",     "budget"};
  if (std::find(kKinds.begin(), kKinds.end(), kind) == kKinds.end())
    throw ConfigError("kind", "unknown experiment kind '" + kind + "'");

  std::string dir = options.output_dir;
  if (dir.empty()) dir = string_req(config, "$", "output_dir");

  const std::uint64_t seed = options.seed_given
                                 ? options.seed
                                 : std::uint64_t(number_at(config, "$", "seed", 0.0));
  // The metadata sidecar must reproduce the run as executed, including a
  // command-line seed override.
  json effective = config;
  effective["seed"] = seed;
  const json& config_echo = effective;

  const fs::path base_dir = options.config_path.empty()
                                ? fs::current_path()
                                : fs::absolute(options.config_path).parent_path();

  OutputDir out;
  out.dir = dir;
  std::error_code ec;
  fs::create_directories(out.dir, ec);
  if (ec) throw ConfigError("output_dir", "cannot create " + dir + ": " + ec.message());

  if (kind == "rabi")
    return run_rabi(config_echo, out, seed, options.best_effort, base_dir);
  if (kind == "power-sweep")
    return run_power_sweep(config_echo, out, seed, options.best_effort, base_dir);
  if (kind == "chevron")
    return run_chevron(config_echo, out, seed, options.best_effort, base_dir);
  if (kind == "position-sweep")
    return run_position_sweep(config_echo, out, seed, options.best_effort, base_dir);
  if (kind == "odmr-map") return run_odmr_map(config_echo, out);
  if (kind == "tune-loop") return run_tune_loop(config_echo, out, base_dir);
  if (kind == "budget") return run_budget_kind(config_echo, out, base_dir);
  return run_fit_kind(config_echo, out, seed, options.best_effort, base_dir);
}

int run_experiment(const RunOptions& options) {
  std::ifstream in(options.config_path);
  if (!in) {
    std::cerr << "error: cannot open config " << options.config_path << '\n';
    return kExitConfig;
  }
  json config;
  try {
    config = json::parse(in);
  } catch (const json::parse_error& e) {
    std::cerr << "error: " << options.config_path << ": " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    return run_experiment_json(config, options);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << options.config_path << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int run_fit(const FitOptions& options) {
  std::vector<std::vector<double>> columns;
  bool time_in_seconds = false;
  try {
    columns = read_csv_columns(options.data_path);
    std::ifstream in(options.data_path);
    std::string first_line;
    std::getline(in, first_line);
    time_in_seconds = first_line.find("time_s") != std::string::npos;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  FitResult fit;
  try {
    if (options.model == "sinusoid" || options.model == "hahn") {
      if (columns.size() < 2) {
        std::cerr << "error: " << options.data_path << ": need time,value columns\n";
        return kExitConfig;
      }
      std::vector<double> t = columns[0];
      if (time_in_seconds)
        for (double& v : t) v *= 1e6;
      fit = options.model == "sinusoid"
                ? fit_decaying_sinusoid(t, columns[1], options.seed)
                : fit_hahn_echo(t, columns[1], options.seed);
    } else if (options.model == "lorentzian") {
      if (columns.size() < 2) {
        std::cerr << "error: " << options.data_path << ": need x,y columns\n";
        return kExitConfig;
      }
      fit = fit_lorentzian(columns[0], columns[1], options.seed);
    } else if (options.model == "sqrtp") {
      if (columns.size() < 2) {
        std::cerr << "error: " << options.data_path << ": need power,omega columns\n";
        return kExitConfig;
      }
      fit = fit_sqrt_power_line(columns[0], columns[1]);
    } else if (options.model == "s11") {
      std::vector<double> freqs;
      std::vector<std::complex<double>> gamma;
      read_s11_csv(options.data_path, freqs, gamma);
      fit = fit_s11_resonance(freqs, gamma, options.seed);
    } else {
      std::cerr << "error: unknown fit model '" << options.model << "'\n";
      return kExitConfig;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  const json j = fit_result_to_json(fit);
  std::cout << j.dump(2) << '\n';
  if (!options.output_path.empty()) {
    std::ofstream out(options.output_path);
    out << j.dump(2) << '\n';
  }
  return (fit.converged || options.best_effort) ? kExitOk : kExitNonConverged;
}

int run_budget(const BudgetOptions& options) {
  try {
    if (options.chain_path.empty()) {
      std::cerr << "error: --chain is required\n";
      return kExitConfig;
    }
    std::ifstream in(options.chain_path);
    if (!in) {
      std::cerr << "error: cannot open " << options.chain_path << '\n';
      return kExitConfig;
    }
    const LossChain chain = loss_chain_from_json(json::parse(in));
    json result = {{"chain_gain_db", chain_gain_db(chain)}};
    if (options.source_power_w > 0)
      result["power_at_antenna_w"] = power_at_antenna_w(options.source_power_w, chain);
    const double alpha =
        options.alpha_deg > 0 ? options.alpha_deg : tetrahedral_angle_deg();
    result["conversion"] = conversion_to_json(conversion_pipeline(
        options.slope_mhz_per_sqrtw, alpha, options.gamma_e_mhz_per_mt));
    std::cout << result.dump(2) << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace nvdr::cli
