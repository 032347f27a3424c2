#pragma once

#include <array>
#include <utility>
#include <vector>

#include "nvdr/vec3.hpp"

namespace nvdr {

/// Electron gyromagnetic ratio in MHz/mT (cyclic). Standard value for the
/// NV- ground-state electron spin; overridable through SpinParams.
inline constexpr double kGammaElectronMHzPerMT = 28.024;

/// Ground-state spin parameters of the NV- center.
struct SpinParams {
  double d_z_ghz = 2.878;               // zero-field splitting
  double hyperfine_mhz = 2.15;          // 14N hyperfine line spacing
  double gamma_e_mhz_per_mt = kGammaElectronMHzPerMT;

  void validate() const;
};

/// One of the four <111> quantization axes of the NV- defect.
/// Construction enforces |axis| = 1 to within 1e-12.
class NVOrientation {
 public:
  explicit NVOrientation(const Vec3& axis);

  /// Normalizes a direction before constructing.
  static NVOrientation from_direction(const Vec3& direction);

  /// The four (+-1,+-1,+-1)/sqrt(3) axes, in a fixed order.
  static const std::array<NVOrientation, 4>& standard_axes();

  const Vec3& axis() const { return axis_; }

 private:
  Vec3 axis_;
};

enum class Branch { ms_plus, ms_minus };

struct Transition {
  int orientation_index = 0;  // 0..3 into NVOrientation::standard_axes()
  int m_i = 0;                // hyperfine index, -1/0/+1
  double frequency_ghz = 0.0;
  Branch branch = Branch::ms_plus;
};

/// All ms=0 -> ms=+-1 lines at a given static field: 12 per branch
/// (4 orientations x 3 hyperfine lines), each branch sorted by frequency.
struct TransitionTable {
  std::vector<Transition> ms_plus;
  std::vector<Transition> ms_minus;

  const std::vector<Transition>& branch(Branch b) const {
    return b == Branch::ms_plus ? ms_plus : ms_minus;
  }
};

struct TraceMeta {
  double power_w = 0.0;
  double detuning_mhz = 0.0;
  Vec3 position_mm{};
};

/// Uniformly sampled population-vs-time signal.
/// Times are in seconds; populations are dimensionless in [0, 1].
struct RabiTrace {
  std::vector<double> times_s;
  std::vector<double> population;
  TraceMeta meta{};
};

/// ms=0 -> ms=-1 and ms=0 -> ms=+1 transition frequencies in GHz, from an
/// exact diagonalization of H = D*Sz'^2 + gamma_e*B0.S with Sz' along the
/// NV axis. The hyperfine interaction enters as a -+/+- A*m_i line shift on
/// the minus/plus branch. Valid in the weak-field regime |b0| < 100 mT.
std::pair<double, double> hamiltonian_eigenfrequencies(const Vec3& b0_mt,
                                                       const NVOrientation& orientation,
                                                       int m_i, const SpinParams& params);

TransitionTable transition_table(const Vec3& b0_mt, const SpinParams& params);

/// On-resonance Rabi frequency in MHz (cyclic) for a linear drive field of
/// amplitude b1: gamma_e * |b1_perp| / sqrt(2), where b1_perp is the
/// component of b1 perpendicular to the NV axis.
double effective_drive_frequency_mhz(const Vec3& b1_mt, const NVOrientation& orientation,
                                     const SpinParams& params);

/// Rotating-frame two-level transfer probability
///   P = w1^2/(dw^2+w1^2) * sin^2(sqrt(dw^2+w1^2) * t / 2)
/// with omega1/delta_omega in angular MHz (rad/us) and t in us.
/// Returns 0 when both frequencies vanish.
double rabi_population(double omega1_rad_per_us, double delta_omega_rad_per_us,
                       double t_us);

/// Lab-frame evolution of the spin-1 Hamiltonian under a linearly polarized
/// drive b1*cos(2*pi*f*t), starting in ms=0; returns the ms=+1 population.
/// Serves as the brute-force check for rabi_population. Requires
/// dt <= 1/(50*drive_freq) so the carrier is resolved.
RabiTrace evolve_numerical(const Vec3& b0_mt, const Vec3& b1_amplitude_mt,
                           double drive_freq_ghz, const NVOrientation& orientation,
                           const SpinParams& params, double t_max_us, double dt_ns);

}  // namespace nvdr
