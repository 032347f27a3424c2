#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nvdr/field.hpp"
#include "nvdr/resonator.hpp"
#include "nvdr/spin.hpp"
#include "nvdr/vec3.hpp"

namespace nvdr {

/// Inhomogeneity and integration settings for ensemble signal synthesis.
struct EnsembleParams {
  double broadening_sigma_mhz = 1.868;  // Gaussian detuning spread (std. dev.)
  int n_detuning_samples = 15;          // Gauss-Hermite order for the average
  Vec3 volume_min_mm{-1.3, -1.3, -0.125};
  Vec3 volume_max_mm{1.3, 1.3, 0.125};
  std::array<int, 3> quadrature_points{6, 6, 7};  // Gauss-Legendre per axis
  std::uint64_t rng_seed = 0;  // only used for optional output noise injection

  void validate() const;
};

/// Full description of one driven-ensemble measurement.
struct RabiExperiment {
  Vec3 b0_mt{0.0, 0.0, 5.031};
  B1Field field{ParametricB1{}};
  BeamModel beam{};
  EnsembleParams ensemble{};
  SpinParams spin{};
  double drive_freq_ghz = 0.0;     // <= 0 selects the resonant center line
  Vec3 beam_origin_mm{0, 0, 0};    // laser focus in resonator coordinates
  std::vector<int> active_orientations{0, 1, 2, 3};
};

/// Drive frequency of the m_i = 0, ms -> +1 line averaged over the active
/// orientations (they coincide whenever B0 is along [001]).
double resonant_drive_frequency_ghz(const RabiExperiment& experiment);

/// Ensemble Rabi frequency estimate at the beam center: the mean effective
/// drive over the active orientations, in MHz.
double predicted_rabi_mhz(const RabiExperiment& experiment, double power_w);

/// Beam-weighted, volume- and broadening-averaged population signal over the
/// active transitions: transverse Gauss-Legendre quadrature truncated at four
/// spot radii, Gauss-Hermite averaging of the Gaussian detuning spread, and
/// the hyperfine/orientation line structure with equal weights. The returned
/// population starts at exactly 0 at t = 0.
RabiTrace total_rabi_signal(const RabiExperiment& experiment,
                            std::span<const double> t_grid_us, double power_w);

struct SweepPoint {
  double axis_value = 0.0;
  double omega_r_mhz = 0.0;
  double decay_rate_per_us = 0.0;  // 1/tau of the fitted envelope
  double stretch_n = 0.0;
  bool converged = false;
};

struct SweepResult {
  std::string axis_label;
  std::vector<SweepPoint> points;
};

struct SweepFitOptions {
  double periods = 25.0;        // fitted window in predicted Rabi periods
  int samples_per_period = 16;  // trace sampling density
  std::uint64_t seed = 0;       // fit search seed
};

/// Per-power trace synthesis plus decaying-sinusoid fits. Non-converged fits
/// are reported per point, never thrown.
SweepResult simulate_power_sweep(const RabiExperiment& experiment,
                                 std::span<const double> powers_w,
                                 const SweepFitOptions& options = {});

/// Rabi frequency versus resonator-center detuning at fixed drive frequency.
/// Each detuning scales the drive amplitude by the resonator enhancement
/// profile relative to its on-resonance value.
SweepResult simulate_chevron(const RabiExperiment& experiment,
                             std::span<const double> detunings_mhz,
                             const ResonatorState& resonator, double background,
                             double power_w, const SweepFitOptions& options = {});

/// Rabi frequency versus laser-spot position, with the antenna-coupling
/// variation described by per-position reflection magnitudes compensated out
/// of the reported frequencies. s11 values must be <= 0 dB.
SweepResult simulate_position_sweep(const RabiExperiment& experiment,
                                    std::span<const double> x_positions_mm,
                                    std::span<const double> s11_db, double power_w,
                                    const SweepFitOptions& options = {});

/// Steady-state saturation model for incoherent readout contrast:
/// s = rabi^2 / (rabi^2 + s_sat^2). s_sat is a calibration input.
struct SaturationParams {
  double peak_rabi_mhz = 1.5;  // drive at zero resonator detuning
  double s_sat_mhz = 0.17981;

  /// s_sat that maps a coherent on/off drive ratio onto a target incoherent
  /// signal ratio at the given off-resonant drive strength.
  static double calibrate_s_sat(double floor_rabi_mhz, double coherent_enhancement,
                                double target_signal_ratio);
};

struct OdmrMap {
  std::vector<double> b0_mt;      // rows
  std::vector<double> freqs_ghz;  // columns
  std::vector<double> signal;     // row-major contrast

  double at(std::size_t i_b0, std::size_t i_freq) const {
    return signal[i_b0 * freqs_ghz.size() + i_freq];
  }
};

/// Incoherent contrast map over (B0, drive frequency): Gaussian lines at the
/// ms -> +1 transition frequencies weighted by the saturation factor, with
/// the drive strength following the resonator enhancement profile.
OdmrMap simulate_odmr_map(const SpinParams& spin, const Vec3& b0_direction,
                          std::span<const double> b0_values_mt,
                          std::span<const double> mw_freqs_ghz,
                          const ResonatorState& resonator, double background,
                          const SaturationParams& saturation, double linewidth_mhz);

/// Frequency-integrated signal per B0 row (trapezoidal).
std::vector<double> integrated_odmr_signal(const OdmrMap& map);

}  // namespace nvdr
