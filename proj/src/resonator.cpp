#include "nvdr/resonator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nvdr {

void ResonatorState::validate() const {
  if (!(f0_ghz > 0)) throw std::invalid_argument("ResonatorState: f0 must be > 0");
  if (!(q_internal > 0) || !(q_external > 0))
    throw std::invalid_argument("ResonatorState: quality factors must be > 0");
}

double ResonatorState::loaded_q() const { return nvdr::loaded_q(q_internal, q_external); }

double loaded_q(double q_internal, double q_external) {
  if (!(q_internal > 0) || !(q_external > 0))
    throw std::invalid_argument("loaded_q: quality factors must be > 0");
  return 1.0 / (1.0 / q_internal + 1.0 / q_external);
}

std::complex<double> s11_response(const ResonatorState& state, double f_ghz) {
  state.validate();
  const double ql = state.loaded_q();
  const double u = 2.0 * ql * (f_ghz - state.f0_ghz) / state.f0_ghz;
  const double dq =
      (state.q_internal - state.q_external) / (state.q_internal + state.q_external);
  return std::complex<double>(dq, -u) / std::complex<double>(1.0, u);
}

double enhancement_factor(const ResonatorState& state, double delta_mhz,
                          double background) {
  state.validate();
  if (background < 0)
    throw std::invalid_argument("enhancement_factor: background must be >= 0");
  const double x = 2.0 * state.loaded_q() * (delta_mhz * 1e-3) / state.f0_ghz;
  return std::sqrt(background * background + 1.0 / (1.0 + x * x));
}

double compensated_gain_db(double s11_db) {
  if (s11_db > 0)
    throw std::invalid_argument("compensated_gain_db: s11 must be <= 0 dB");
  if (s11_db == 0) return -std::numeric_limits<double>::infinity();
  const double reflected = std::pow(10.0, s11_db / 10.0);
  return 10.0 * std::log10(1.0 - reflected);
}

double temperature_to_frequency_ghz(const ThermalPlant& plant, double temperature_k) {
  return plant.freq_vs_temp(temperature_k);
}

std::pair<ControllerState, double> controller_step(const ControllerState& ctrl,
                                                   double measured_f0_ghz, double dt_s) {
  if (!(dt_s > 0)) throw std::invalid_argument("controller_step: dt must be > 0");
  const double error = ctrl.setpoint_ghz - measured_f0_ghz;
  const double derivative = ctrl.primed ? (error - ctrl.last_error_ghz) / dt_s : 0.0;
  double output = ctrl.k_p_mw_per_ghz * error + ctrl.k_d_mw_s_per_ghz * derivative;
  output = std::clamp(output, 0.0, ctrl.max_output_mw);

  ControllerState next = ctrl;
  next.last_error_ghz = error;
  next.output_mw = output;
  next.primed = true;
  return {next, output};
}

double duty_cycle_compensation_us(double t1_mw_us, double total_us) {
  if (t1_mw_us < 0 || t1_mw_us > total_us)
    throw std::invalid_argument("duty_cycle_compensation: need 0 <= t1 <= total");
  return total_us - t1_mw_us;
}

std::vector<TuneLoopSample> simulate_tune_loop(
    const ThermalPlant& plant, ControllerState ctrl, double f_initial_ghz, double dt_s,
    int n_steps, const std::function<double(double)>& disturbance_ghz) {
  if (n_steps < 0) throw std::invalid_argument("simulate_tune_loop: n_steps < 0");
  std::vector<TuneLoopSample> samples;
  samples.reserve(n_steps);

  // Clamp the commanded power to the calibrated actuator range.
  const double p_min = plant.freq_vs_laser_power.x_min();
  const double p_max = std::min(ctrl.max_output_mw, plant.freq_vs_laser_power.x_max());

  double f = f_initial_ghz;
  for (int step = 0; step < n_steps; ++step) {
    const double t = step * dt_s;
    auto [next, power] = controller_step(ctrl, f, dt_s);
    ctrl = next;
    const double p = std::clamp(power, p_min, p_max);
    const double f_eq = plant.freq_vs_laser_power(p) +
                        (disturbance_ghz ? disturbance_ghz(t) : 0.0);
    f += dt_s / plant.tau_thermal_s * (f_eq - f);
    samples.push_back({t, f, ctrl.setpoint_ghz - f, p});
  }
  return samples;
}

}  // namespace nvdr
