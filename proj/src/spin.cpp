#include "nvdr/spin.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace nvdr {

namespace {

using Matrix3cd = Eigen::Matrix3cd;
using Vector3cd = Eigen::Vector3cd;
constexpr std::complex<double> kI{0.0, 1.0};

// Spin-1 operators in the {|+1>, |0>, |-1>} basis.
Matrix3cd spin_x() {
  Matrix3cd m = Matrix3cd::Zero();
  const double s = 1.0 / std::numbers::sqrt2;
  m(0, 1) = s;
  m(1, 0) = s;
  m(1, 2) = s;
  m(2, 1) = s;
  return m;
}

Matrix3cd spin_y() {
  Matrix3cd m = Matrix3cd::Zero();
  const std::complex<double> s = -kI / std::numbers::sqrt2;
  m(0, 1) = s;
  m(1, 0) = -s;
  m(1, 2) = s;
  m(2, 1) = -s;
  return m;
}

Matrix3cd spin_z() {
  Matrix3cd m = Matrix3cd::Zero();
  m(0, 0) = 1.0;
  m(2, 2) = -1.0;
  return m;
}

// Orthonormal frame with ez along the NV axis. The transverse axes are an
// arbitrary but deterministic completion; eigenvalues only depend on the
// parallel/perpendicular field split.
struct NVFrame {
  Vec3 ex, ey, ez;
};

NVFrame frame_for(const NVOrientation& orientation) {
  NVFrame f;
  f.ez = orientation.axis();
  const Vec3 seed = std::abs(f.ez.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  f.ex = normalized(seed - dot(seed, f.ez) * f.ez);
  f.ey = cross(f.ez, f.ex);
  return f;
}

Matrix3cd hamiltonian_ghz(const Vec3& b_field_mt, const NVOrientation& orientation,
                          const SpinParams& params) {
  const NVFrame f = frame_for(orientation);
  const double g = params.gamma_e_mhz_per_mt * 1e-3;  // GHz/mT
  Matrix3cd h = params.d_z_ghz * spin_z() * spin_z();
  h += g * dot(b_field_mt, f.ex) * spin_x();
  h += g * dot(b_field_mt, f.ey) * spin_y();
  h += g * dot(b_field_mt, f.ez) * spin_z();
  return h;
}

void check_weak_field(const Vec3& b0_mt) {
  if (norm(b0_mt) >= 100.0)
    throw std::invalid_argument("hamiltonian_eigenfrequencies: |b0| must be < 100 mT");
}

}  // namespace

void SpinParams::validate() const {
  if (!(d_z_ghz > 0)) throw std::invalid_argument("SpinParams: d_z must be > 0");
  if (hyperfine_mhz < 0) throw std::invalid_argument("SpinParams: hyperfine must be >= 0");
  if (!(gamma_e_mhz_per_mt > 0))
    throw std::invalid_argument("SpinParams: gamma_e must be > 0");
}

NVOrientation::NVOrientation(const Vec3& axis) : axis_(axis) {
  if (std::abs(norm(axis) - 1.0) > 1e-12)
    throw std::invalid_argument("NVOrientation: axis must be a unit vector");
}

NVOrientation NVOrientation::from_direction(const Vec3& direction) {
  const double n = norm(direction);
  if (n == 0.0) throw std::invalid_argument("NVOrientation: zero direction");
  return NVOrientation(direction / n);
}

const std::array<NVOrientation, 4>& NVOrientation::standard_axes() {
  static const std::array<NVOrientation, 4> axes = {
      NVOrientation::from_direction({1, 1, 1}),
      NVOrientation::from_direction({1, -1, -1}),
      NVOrientation::from_direction({-1, 1, -1}),
      NVOrientation::from_direction({-1, -1, 1}),
  };
  return axes;
}

std::pair<double, double> hamiltonian_eigenfrequencies(const Vec3& b0_mt,
                                                       const NVOrientation& orientation,
                                                       int m_i, const SpinParams& params) {
  params.validate();
  check_weak_field(b0_mt);
  if (m_i < -1 || m_i > 1)
    throw std::invalid_argument("hamiltonian_eigenfrequencies: m_i must be in {-1,0,1}");

  const Matrix3cd h = hamiltonian_ghz(b0_mt, orientation, params);
  Eigen::SelfAdjointEigenSolver<Matrix3cd> solver(h);  // iterative QL path
  const auto& ev = solver.eigenvalues();
  // Weak field keeps the ms=0-like level lowest and the ms=-1-like level
  // below ms=+1, so ascending order identifies the levels directly.
  const double a_ghz = params.hyperfine_mhz * 1e-3;
  const double f_minus = (ev(1) - ev(0)) - a_ghz * m_i;
  const double f_plus = (ev(2) - ev(0)) + a_ghz * m_i;
  return {f_minus, f_plus};
}

TransitionTable transition_table(const Vec3& b0_mt, const SpinParams& params) {
  TransitionTable table;
  const auto& axes = NVOrientation::standard_axes();
  for (int oi = 0; oi < 4; ++oi) {
    for (int m_i = -1; m_i <= 1; ++m_i) {
      const auto [f_minus, f_plus] =
          hamiltonian_eigenfrequencies(b0_mt, axes[oi], m_i, params);
      table.ms_minus.push_back({oi, m_i, f_minus, Branch::ms_minus});
      table.ms_plus.push_back({oi, m_i, f_plus, Branch::ms_plus});
    }
  }
  auto by_frequency = [](const Transition& a, const Transition& b) {
    return a.frequency_ghz < b.frequency_ghz;
  };
  std::sort(table.ms_plus.begin(), table.ms_plus.end(), by_frequency);
  std::sort(table.ms_minus.begin(), table.ms_minus.end(), by_frequency);
  return table;
}

double effective_drive_frequency_mhz(const Vec3& b1_mt, const NVOrientation& orientation,
                                     const SpinParams& params) {
  const Vec3 perp = b1_mt - dot(b1_mt, orientation.axis()) * orientation.axis();
  return params.gamma_e_mhz_per_mt * norm(perp) / std::numbers::sqrt2;
}

double rabi_population(double omega1_rad_per_us, double delta_omega_rad_per_us,
                       double t_us) {
  if (t_us < 0) throw std::invalid_argument("rabi_population: t must be >= 0");
  const double w1sq = omega1_rad_per_us * omega1_rad_per_us;
  const double total = w1sq + delta_omega_rad_per_us * delta_omega_rad_per_us;
  if (total == 0.0) return 0.0;
  const double s = std::sin(0.5 * std::sqrt(total) * t_us);
  return w1sq / total * s * s;
}

RabiTrace evolve_numerical(const Vec3& b0_mt, const Vec3& b1_amplitude_mt,
                           double drive_freq_ghz, const NVOrientation& orientation,
                           const SpinParams& params, double t_max_us, double dt_ns) {
  params.validate();
  check_weak_field(b0_mt);
  if (!(drive_freq_ghz > 0))
    throw std::invalid_argument("evolve_numerical: drive frequency must be > 0");
  if (!(dt_ns > 0) || dt_ns * 50.0 * drive_freq_ghz > 1.0 + 1e-12)
    throw std::invalid_argument("evolve_numerical: dt must satisfy dt <= 1/(50*f)");
  if (t_max_us < 0) throw std::invalid_argument("evolve_numerical: t_max must be >= 0");

  const Matrix3cd h0 = hamiltonian_ghz(b0_mt, orientation, params);
  const Matrix3cd v = hamiltonian_ghz(b1_amplitude_mt, orientation, params) -
                      hamiltonian_ghz({0, 0, 0}, orientation, params);

  // Work in the eigenbasis of the static Hamiltonian: start in the
  // ms=0-like ground eigenstate and read out the upper-branch population,
  // matching what a transition measurement observes.
  Eigen::SelfAdjointEigenSolver<Matrix3cd> solver(h0);
  const Vector3cd initial = solver.eigenvectors().col(0);
  const Vector3cd detect = solver.eigenvectors().col(2);

  const double two_pi = 2.0 * std::numbers::pi;
  // i dpsi/dt = 2*pi*H psi with H in GHz and t in ns.
  auto deriv = [&](double t_ns, const Vector3cd& psi) -> Vector3cd {
    const double c = std::cos(two_pi * drive_freq_ghz * t_ns);
    return -kI * two_pi * ((h0 + c * v) * psi);
  };

  const long n_steps = std::lround(std::ceil(t_max_us * 1e3 / dt_ns));
  const long stride = std::max(1L, n_steps / 4000);

  Vector3cd psi = initial;

  RabiTrace trace;
  trace.times_s.reserve(n_steps / stride + 2);
  trace.population.reserve(n_steps / stride + 2);
  auto record = [&](double t_ns) {
    trace.times_s.push_back(t_ns * 1e-9);
    trace.population.push_back(std::norm(detect.dot(psi)));
  };

  record(0.0);
  for (long step = 0; step < n_steps; ++step) {
    const double t = step * dt_ns;
    const Vector3cd k1 = deriv(t, psi);
    const Vector3cd k2 = deriv(t + 0.5 * dt_ns, psi + (0.5 * dt_ns) * k1);
    const Vector3cd k3 = deriv(t + 0.5 * dt_ns, psi + (0.5 * dt_ns) * k2);
    const Vector3cd k4 = deriv(t + dt_ns, psi + dt_ns * k3);
    psi += (dt_ns / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if ((step + 1) % stride == 0 || step + 1 == n_steps) {
      psi.normalize();  // RK4 drifts off the unit sphere very slowly
      record((step + 1) * dt_ns);
    }
  }
  return trace;
}

}  // namespace nvdr
