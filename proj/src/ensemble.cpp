#include "nvdr/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nvdr/fitting.hpp"
#include "nvdr/quadrature.hpp"

namespace nvdr {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Oscillator {
  double amplitude;        // weight * w1^2/(w1^2 + dw^2)
  double omega_rad_per_us; // sqrt(w1^2 + dw^2)
};

void check_experiment(const RabiExperiment& e) {
  e.spin.validate();
  e.ensemble.validate();
  if (e.active_orientations.empty())
    throw std::invalid_argument("RabiExperiment: no active orientations");
  for (int oi : e.active_orientations)
    if (oi < 0 || oi > 3)
      throw std::invalid_argument("RabiExperiment: orientation index out of range");
}

// Beam-weighted volume nodes: Gauss-Legendre along z over the full axial
// bounds, transverse Gauss-Legendre truncated at four local spot radii.
struct VolumeNode {
  Vec3 position_mm;
  double weight;
};

std::vector<VolumeNode> volume_nodes(const RabiExperiment& e) {
  const auto& ens = e.ensemble;
  std::vector<VolumeNode> nodes;
  const QuadratureRule rule_z = gauss_legendre(ens.quadrature_points[2],
                                               ens.volume_min_mm.z, ens.volume_max_mm.z);
  const double cx = e.beam_origin_mm.x + e.beam.mu_x_mm;
  const double cy = e.beam_origin_mm.y + e.beam.mu_y_mm;
  for (int iz = 0; iz < ens.quadrature_points[2]; ++iz) {
    const double z = rule_z.nodes[iz];
    const double wz_mm = spot_radius_um(e.beam, z - e.beam_origin_mm.z) * 1e-3;
    const double half = 4.0 * wz_mm;
    const double x_lo = std::max(ens.volume_min_mm.x, cx - half);
    const double x_hi = std::min(ens.volume_max_mm.x, cx + half);
    const double y_lo = std::max(ens.volume_min_mm.y, cy - half);
    const double y_hi = std::min(ens.volume_max_mm.y, cy + half);
    if (!(x_lo < x_hi) || !(y_lo < y_hi)) continue;
    const QuadratureRule rule_x = gauss_legendre(ens.quadrature_points[0], x_lo, x_hi);
    const QuadratureRule rule_y = gauss_legendre(ens.quadrature_points[1], y_lo, y_hi);
    for (int ix = 0; ix < ens.quadrature_points[0]; ++ix) {
      for (int iy = 0; iy < ens.quadrature_points[1]; ++iy) {
        const Vec3 p{rule_x.nodes[ix], rule_y.nodes[iy], z};
        const double excitation =
            laser_intensity(e.beam, p.x - e.beam_origin_mm.x, p.y - e.beam_origin_mm.y,
                            p.z - e.beam_origin_mm.z);
        const double w =
            rule_x.weights[ix] * rule_y.weights[iy] * rule_z.weights[iz] * excitation;
        if (w > 0) nodes.push_back({p, w});
      }
    }
  }
  if (nodes.empty())
    throw std::invalid_argument("total_rabi_signal: empty integration volume");
  return nodes;
}

std::pair<std::vector<Oscillator>, double> build_oscillators(const RabiExperiment& e,
                                                             double power_w) {
  check_experiment(e);
  const double drive_ghz =
      e.drive_freq_ghz > 0 ? e.drive_freq_ghz : resonant_drive_frequency_ghz(e);

  const TransitionTable table = transition_table(e.b0_mt, e.spin);
  const auto& axes = NVOrientation::standard_axes();

  // Gauss-Hermite sampling of the Gaussian detuning broadening.
  std::vector<double> gh_offsets_mhz{0.0};
  std::vector<double> gh_weights{1.0};
  if (e.ensemble.broadening_sigma_mhz > 0 && e.ensemble.n_detuning_samples > 1) {
    const QuadratureRule gh = gauss_hermite(e.ensemble.n_detuning_samples);
    gh_offsets_mhz.resize(gh.nodes.size());
    gh_weights.resize(gh.nodes.size());
    const double scale = std::numbers::sqrt2 * e.ensemble.broadening_sigma_mhz;
    const double inv_total = 1.0 / std::sqrt(std::numbers::pi);
    for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
      gh_offsets_mhz[j] = scale * gh.nodes[j];
      gh_weights[j] = gh.weights[j] * inv_total;
    }
  }

  const std::vector<VolumeNode> nodes = volume_nodes(e);
  const double line_weight = 1.0 / double(e.active_orientations.size() * 3);

  std::vector<Oscillator> oscillators;
  oscillators.reserve(nodes.size() * e.active_orientations.size() * 3 *
                      gh_offsets_mhz.size());
  double weight_total = 0.0;

  for (const VolumeNode& node : nodes) {
    const Vec3 b1 = b1_at(e.field, node.position_mm, power_w);
    for (int oi : e.active_orientations) {
      const double w1 =
          kTwoPi * effective_drive_frequency_mhz(b1, axes[oi], e.spin);
      for (const Transition& line : table.ms_plus) {
        if (line.orientation_index != oi) continue;
        const double line_detuning_mhz = (line.frequency_ghz - drive_ghz) * 1e3;
        for (std::size_t j = 0; j < gh_offsets_mhz.size(); ++j) {
          const double weight = node.weight * line_weight * gh_weights[j];
          weight_total += weight;
          const double dw = kTwoPi * (line_detuning_mhz + gh_offsets_mhz[j]);
          const double total_sq = w1 * w1 + dw * dw;
          if (total_sq <= 0) continue;  // undriven, undetuned: stays in ms=0
          oscillators.push_back(
              {weight * w1 * w1 / total_sq, std::sqrt(total_sq)});
        }
      }
    }
  }
  return {std::move(oscillators), weight_total};
}

SweepFitOptions sanitized(const SweepFitOptions& options) {
  SweepFitOptions o = options;
  if (!(o.periods > 1)) throw std::invalid_argument("SweepFitOptions: periods must be > 1");
  if (o.samples_per_period < 4)
    throw std::invalid_argument("SweepFitOptions: need >= 4 samples per period");
  return o;
}

std::vector<double> sweep_time_grid(double omega_pred_mhz, const SweepFitOptions& o) {
  if (!(omega_pred_mhz > 0))
    throw std::invalid_argument("sweep: predicted Rabi frequency is zero");
  const int n = int(o.periods * o.samples_per_period);
  const double dt = 1.0 / (omega_pred_mhz * o.samples_per_period);
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = i * dt;
  return t;
}

SweepPoint fit_sweep_point(double axis_value, std::span<const double> t_us,
                           std::span<const double> y, std::uint64_t seed) {
  SweepPoint point;
  point.axis_value = axis_value;
  const FitResult fit = fit_decaying_sinusoid(t_us, y, seed);
  point.omega_r_mhz = fit.parameter("omega_r");
  point.decay_rate_per_us = 1.0 / fit.parameter("tau");
  point.stretch_n = fit.parameter("n");
  point.converged = fit.converged;
  return point;
}

}  // namespace

void EnsembleParams::validate() const {
  if (broadening_sigma_mhz < 0)
    throw std::invalid_argument("EnsembleParams: broadening sigma must be >= 0");
  if (n_detuning_samples < 1)
    throw std::invalid_argument("EnsembleParams: need >= 1 detuning sample");
  for (int q : quadrature_points)
    if (q < 2) throw std::invalid_argument("EnsembleParams: need >= 2 points per axis");
  if (!(volume_min_mm.x < volume_max_mm.x) || !(volume_min_mm.y < volume_max_mm.y) ||
      !(volume_min_mm.z < volume_max_mm.z))
    throw std::invalid_argument("EnsembleParams: empty volume bounds");
}

double resonant_drive_frequency_ghz(const RabiExperiment& e) {
  check_experiment(e);
  const auto& axes = NVOrientation::standard_axes();
  double sum = 0;
  for (int oi : e.active_orientations) {
    const auto [f_minus, f_plus] =
        hamiltonian_eigenfrequencies(e.b0_mt, axes[oi], 0, e.spin);
    (void)f_minus;
    sum += f_plus;
  }
  return sum / double(e.active_orientations.size());
}

double predicted_rabi_mhz(const RabiExperiment& e, double power_w) {
  check_experiment(e);
  const Vec3 b1 = b1_at(e.field, e.beam_origin_mm, power_w);
  const auto& axes = NVOrientation::standard_axes();
  double sum = 0;
  for (int oi : e.active_orientations)
    sum += effective_drive_frequency_mhz(b1, axes[oi], e.spin);
  return sum / double(e.active_orientations.size());
}

RabiTrace total_rabi_signal(const RabiExperiment& e, std::span<const double> t_grid_us,
                            double power_w) {
  if (t_grid_us.size() < 2)
    throw std::invalid_argument("total_rabi_signal: need >= 2 time samples");
  const double dt = t_grid_us[1] - t_grid_us[0];
  for (std::size_t i = 1; i < t_grid_us.size(); ++i) {
    const double step = t_grid_us[i] - t_grid_us[i - 1];
    if (!(step > 0) || std::abs(step - dt) > 1e-9 * std::max(dt, step))
      throw std::invalid_argument("total_rabi_signal: time grid must be uniform");
  }

  const auto [oscillators, weight_total] = build_oscillators(e, power_w);

  RabiTrace trace;
  trace.times_s.resize(t_grid_us.size());
  trace.population.resize(t_grid_us.size());
  trace.meta.power_w = power_w;
  trace.meta.position_mm = e.beam_origin_mm;

  for (std::size_t i = 0; i < t_grid_us.size(); ++i) {
    const double t = t_grid_us[i];
    double acc = 0.0;
    for (const Oscillator& osc : oscillators) {
      const double s = std::sin(0.5 * osc.omega_rad_per_us * t);
      acc += osc.amplitude * s * s;
    }
    trace.times_s[i] = t * 1e-6;
    trace.population[i] = acc / weight_total;
  }
  return trace;
}

SweepResult simulate_power_sweep(const RabiExperiment& e,
                                 std::span<const double> powers_w,
                                 const SweepFitOptions& options) {
  const SweepFitOptions o = sanitized(options);
  for (double p : powers_w)
    if (!(p > 0)) throw std::invalid_argument("simulate_power_sweep: powers must be > 0");

  SweepResult result;
  result.axis_label = "power_w";
  for (double p : powers_w) {
    const std::vector<double> t = sweep_time_grid(predicted_rabi_mhz(e, p), o);
    const RabiTrace trace = total_rabi_signal(e, t, p);
    result.points.push_back(fit_sweep_point(p, t, trace.population, o.seed));
  }
  return result;
}

SweepResult simulate_chevron(const RabiExperiment& e, std::span<const double> detunings_mhz,
                             const ResonatorState& resonator, double background,
                             double power_w, const SweepFitOptions& options) {
  const SweepFitOptions o = sanitized(options);
  const double m0 = enhancement_factor(resonator, 0.0, background);

  SweepResult result;
  result.axis_label = "detuning_mhz";
  for (double delta : detunings_mhz) {
    const double scale = enhancement_factor(resonator, delta, background) / m0;
    const double p_eff = power_w * scale * scale;
    const std::vector<double> t = sweep_time_grid(predicted_rabi_mhz(e, p_eff), o);
    RabiTrace trace = total_rabi_signal(e, t, p_eff);
    trace.meta.detuning_mhz = delta;
    SweepPoint point = fit_sweep_point(delta, t, trace.population, o.seed);
    result.points.push_back(point);
  }
  return result;
}

SweepResult simulate_position_sweep(const RabiExperiment& e,
                                    std::span<const double> x_positions_mm,
                                    std::span<const double> s11_db, double power_w,
                                    const SweepFitOptions& options) {
  const SweepFitOptions o = sanitized(options);
  if (x_positions_mm.size() != s11_db.size())
    throw std::invalid_argument("simulate_position_sweep: positions/s11 size mismatch");
  for (double s : s11_db)
    if (s > 0)
      throw std::invalid_argument("simulate_position_sweep: s11 must be <= 0 dB");

  SweepResult result;
  result.axis_label = "x_mm";
  for (std::size_t i = 0; i < x_positions_mm.size(); ++i) {
    const double gain_db = compensated_gain_db(s11_db[i]);
    const double gain_lin = std::isinf(gain_db) ? 0.0 : std::pow(10.0, gain_db / 20.0);

    SweepPoint point;
    point.axis_value = x_positions_mm[i];
    if (gain_lin <= 0) {
      result.points.push_back(point);  // fully reflected: nothing to fit
      continue;
    }

    RabiExperiment local = e;
    local.beam_origin_mm.x = x_positions_mm[i];
    const double p_eff = power_w * gain_lin * gain_lin;
    const std::vector<double> t = sweep_time_grid(predicted_rabi_mhz(local, p_eff), o);
    const RabiTrace trace = total_rabi_signal(local, t, p_eff);
    point = fit_sweep_point(x_positions_mm[i], t, trace.population, o.seed);
    point.omega_r_mhz /= gain_lin;  // reflection compensation
    result.points.push_back(point);
  }
  return result;
}

double SaturationParams::calibrate_s_sat(double floor_rabi_mhz,
                                         double coherent_enhancement,
                                         double target_signal_ratio) {
  if (!(coherent_enhancement > 1) || !(target_signal_ratio > 1) ||
      !(target_signal_ratio < coherent_enhancement * coherent_enhancement))
    throw std::invalid_argument("calibrate_s_sat: unattainable target ratio");
  const double q = coherent_enhancement * coherent_enhancement;
  const double r = q * (target_signal_ratio - 1.0) / (q - target_signal_ratio);
  return floor_rabi_mhz * std::sqrt(r);
}

OdmrMap simulate_odmr_map(const SpinParams& spin, const Vec3& b0_direction,
                          std::span<const double> b0_values_mt,
                          std::span<const double> mw_freqs_ghz,
                          const ResonatorState& resonator, double background,
                          const SaturationParams& saturation, double linewidth_mhz) {
  spin.validate();
  if (!(linewidth_mhz > 0))
    throw std::invalid_argument("simulate_odmr_map: linewidth must be > 0");
  const Vec3 dir = normalized(b0_direction);
  const double m0 = enhancement_factor(resonator, 0.0, background);

  OdmrMap map;
  map.b0_mt.assign(b0_values_mt.begin(), b0_values_mt.end());
  map.freqs_ghz.assign(mw_freqs_ghz.begin(), mw_freqs_ghz.end());
  map.signal.resize(b0_values_mt.size() * mw_freqs_ghz.size(), 0.0);

  // Saturation factor versus drive frequency (independent of B0).
  std::vector<double> sat(mw_freqs_ghz.size());
  for (std::size_t j = 0; j < mw_freqs_ghz.size(); ++j) {
    const double delta_mhz = (mw_freqs_ghz[j] - resonator.f0_ghz) * 1e3;
    const double rabi = saturation.peak_rabi_mhz *
                        enhancement_factor(resonator, delta_mhz, background) / m0;
    sat[j] = rabi * rabi / (rabi * rabi + saturation.s_sat_mhz * saturation.s_sat_mhz);
  }

  const double inv_two_sigma_sq = 1.0 / (2.0 * linewidth_mhz * linewidth_mhz);
  for (std::size_t i = 0; i < map.b0_mt.size(); ++i) {
    const TransitionTable table = transition_table(map.b0_mt[i] * dir, spin);
    for (std::size_t j = 0; j < map.freqs_ghz.size(); ++j) {
      double acc = 0.0;
      for (const Transition& line : table.ms_plus) {
        const double df_mhz = (map.freqs_ghz[j] - line.frequency_ghz) * 1e3;
        acc += std::exp(-df_mhz * df_mhz * inv_two_sigma_sq);
      }
      map.signal[i * map.freqs_ghz.size() + j] = acc / 12.0 * sat[j];
    }
  }
  return map;
}

std::vector<double> integrated_odmr_signal(const OdmrMap& map) {
  std::vector<double> integral(map.b0_mt.size(), 0.0);
  if (map.freqs_ghz.size() < 2) return integral;
  for (std::size_t i = 0; i < map.b0_mt.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 1; j < map.freqs_ghz.size(); ++j) {
      const double df = map.freqs_ghz[j] - map.freqs_ghz[j - 1];
      acc += 0.5 * (map.at(i, j) + map.at(i, j - 1)) * df;
    }
    integral[i] = acc;
  }
  return integral;
}

}  // namespace nvdr
