#pragma once

#include <complex>
#include <functional>
#include <utility>
#include <vector>

#include "nvdr/tables.hpp"

namespace nvdr {

/// One-port dielectric resonator description.
struct ResonatorState {
  double f0_ghz = 2.967;
  double q_internal = 1275.0;
  double q_external = 1328.0;
  double temperature_k = 17.0;
  double epsilon_r = 4300.0;  // metadata only

  void validate() const;
  double loaded_q() const;
  double coupling() const { return q_internal / q_external; }
};

/// Harmonic combination 1/Q_L = 1/Q_I + 1/Q_E.
double loaded_q(double q_internal, double q_external);

/// One-port reflection coefficient
///   Gamma(f) = (dq - i*u) / (1 + i*u),  u = 2*Q_L*(f-f0)/f0,
/// with dq = (Q_I - Q_E)/(Q_I + Q_E). |Gamma| <= 1 everywhere; the phase
/// winds a full 2*pi through resonance only when overcoupled (Q_I > Q_E).
std::complex<double> s11_response(const ResonatorState& state, double f_ghz);

/// Drive-amplitude multiplier versus resonator detuning:
///   m(delta)^2 = background^2 + 1 / (1 + (2*Q_L*delta/f0)^2).
/// The resonant term is normalized to 1 at delta = 0; `background` is the
/// off-resonant floor relative to the peak term.
double enhancement_factor(const ResonatorState& state, double delta_mhz,
                          double background);

/// Fraction of incident power absorbed by the load, in dB:
///   G_c = 10*log10(1 - (10^(s11/20))^2).
/// s11 = 0 dB returns -infinity (total reflection); s11 > 0 dB is invalid.
double compensated_gain_db(double s11_db);

/// First-order thermal model of the resonator frequency.
struct ThermalPlant {
  double tau_thermal_s = 3.0;
  CalibrationTable freq_vs_temp;         // K -> GHz
  CalibrationTable freq_vs_laser_power;  // mW -> GHz
};

/// Monotone interpolation of the temperature calibration table.
double temperature_to_frequency_ghz(const ThermalPlant& plant, double temperature_k);

/// Proportional-derivative tuning controller commanding the heating laser.
/// Output is clamped to [0, max_output_mw]; there is no integral term, so a
/// small steady-state error proportional to the holding power remains.
struct ControllerState {
  double k_p_mw_per_ghz = 60000.0;
  double k_d_mw_s_per_ghz = 150.0;
  double setpoint_ghz = 2.967;
  double last_error_ghz = 0.0;
  double output_mw = 0.0;
  double max_output_mw = 50.0;
  bool primed = false;  // derivative term disabled on the first step
};

std::pair<ControllerState, double> controller_step(const ControllerState& ctrl,
                                                   double measured_f0_ghz, double dt_s);

/// Padding pulse duration that keeps the per-repetition drive duty cycle
/// constant: t2 = total - t1.
double duty_cycle_compensation_us(double t1_mw_us, double total_us);

struct TuneLoopSample {
  double t_s;
  double f0_ghz;
  double error_ghz;
  double output_mw;
};

/// Closed-loop simulation of the PD controller against the thermal plant.
/// The plant relaxes toward freq_vs_laser_power(P) + disturbance(t) with the
/// plant time constant. Deterministic.
std::vector<TuneLoopSample> simulate_tune_loop(
    const ThermalPlant& plant, ControllerState ctrl, double f_initial_ghz, double dt_s,
    int n_steps, const std::function<double(double)>& disturbance_ghz);

}  // namespace nvdr
