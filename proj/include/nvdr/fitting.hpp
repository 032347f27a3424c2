#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nvdr/spin.hpp"

namespace nvdr {

/// Outcome of a nonlinear fit: named parameters with 95% confidence
/// half-widths from the linearized covariance at the optimum.
struct FitResult {
  std::vector<std::string> names;
  std::vector<double> parameters;
  std::vector<double> ci95;
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> flags;

  double parameter(std::string_view name) const;
  double ci(std::string_view name) const;
  bool has_flag(std::string_view flag) const;
};

struct ParameterBounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

using Objective = std::function<double(std::span<const double>)>;

struct SearchOptions {
  int budget = 20000;          // total objective evaluations
  std::uint64_t seed = 0;      // start-point generator seed
  int n_starts = 12;           // multistart count (includes given guess)
  double initial_step_fraction = 0.25;  // of each bound range
  double mesh_tolerance = 1e-11;        // stop when step falls below tol*range
};

/// Two-stage derivative-free minimizer: a seeded multistart coordinate
/// pattern search (step contraction 0.5, expansion 2.0) followed by a fine
/// pattern-search polish from the best start. Deterministic for a given
/// seed. Budget exhaustion before the mesh tolerance is reached reports
/// converged = false.
FitResult global_then_local(const Objective& objective, const ParameterBounds& bounds,
                            const SearchOptions& options = {},
                            std::span<const double> initial_guess = {});

/// 97.5% Student-t quantile (for two-sided 95% intervals).
double student_t_975(int dof);

// ---------------------------------------------------------------------------
// Curve-fit models. Each fit seeds a pattern-search stage from data-driven
// heuristics and refines with Levenberg-Marquardt; noiseless data generated
// from the model itself is recovered to better than 1e-6 relative.
// ---------------------------------------------------------------------------

/// amplitude * exp(-(t/tau)^n) * sin(2*pi*omega*t + phase) + offset
double decaying_sinusoid_model(double t_us, double omega_mhz, double tau_us, double n,
                               double phase, double offset, double amplitude);

/// exp(-(t/tau)^n) * (a1 + a2*sin^2(0.5*omega*t + phase)) + offset
double hahn_echo_model(double t_us, double tau_us, double n, double a1, double a2,
                       double omega_rad_per_us, double phase, double offset);

/// offset + amplitude / (1 + (2*(x-center)/fwhm)^2)
double lorentzian_model(double x, double center, double fwhm, double amplitude,
                        double offset);

/// Parameters: omega_r (MHz), tau (us), n in [0.5,3], phase, offset, amplitude.
FitResult fit_decaying_sinusoid(std::span<const double> t_us, std::span<const double> y,
                                std::uint64_t seed = 0);
FitResult fit_decaying_sinusoid(const RabiTrace& trace, std::uint64_t seed = 0);

/// Parameters: tau (us), n in [0.5,4], a1, a2, omega (rad/us), phase, offset.
/// When the modulation amplitude a2 vanishes, omega is unidentifiable and the
/// result carries the "omega-unidentifiable" flag.
FitResult fit_hahn_echo(std::span<const double> t_us, std::span<const double> y,
                        std::uint64_t seed = 0);
FitResult fit_hahn_echo(const RabiTrace& trace, std::uint64_t seed = 0);

/// Parameters: center, fwhm, amplitude, offset.
FitResult fit_lorentzian(std::span<const double> x, std::span<const double> y,
                         std::uint64_t seed = 0);

/// Linear fit omega = slope*sqrt(power) + intercept (closed form).
FitResult fit_sqrt_power_line(std::span<const double> powers_w,
                              std::span<const double> omegas_mhz,
                              bool zero_intercept = false);

/// Complex one-port resonance fit. Parameters: f0 (GHz), q_loaded,
/// q_internal, q_external; the loaded-Q relation holds by construction.
/// Traces spanning fewer than ~3 linewidths are flagged "insufficient-span".
FitResult fit_s11_resonance(std::span<const double> freqs_ghz,
                            std::span<const std::complex<double>> gamma,
                            std::uint64_t seed = 0);

}  // namespace nvdr
