#include "nvdr/fitting.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace nvdr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

double clamp_to(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

void clamp_vector(std::vector<double>& x, const ParameterBounds& b) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = clamp_to(x[i], b.lower[i], b.upper[i]);
}

void check_bounds(const ParameterBounds& b) {
  if (b.lower.size() != b.upper.size() || b.lower.empty())
    throw std::invalid_argument("bounds: mismatched or empty");
  for (std::size_t i = 0; i < b.lower.size(); ++i)
    if (!std::isfinite(b.lower[i]) || !std::isfinite(b.upper[i]) ||
        !(b.lower[i] < b.upper[i]))
      throw std::invalid_argument("bounds: need finite lower < upper");
}

struct PatternResult {
  std::vector<double> x;
  double value = kInf;
  bool mesh_converged = false;
};

// Opportunistic coordinate pattern search with step contraction 0.5 and
// expansion 2.0, clamped to the box.
PatternResult pattern_search(const Objective& f, std::vector<double> x,
                             const ParameterBounds& b, int budget, int& evals,
                             double step_fraction, double mesh_tol) {
  const std::size_t n = x.size();
  std::vector<double> range(n), step(n);
  for (std::size_t i = 0; i < n; ++i) {
    range[i] = b.upper[i] - b.lower[i];
    step[i] = step_fraction * range[i];
  }

  clamp_vector(x, b);
  double fx = f(x);
  ++evals;

  PatternResult best{x, fx, false};
  while (evals < budget) {
    bool improved = false;
    for (std::size_t i = 0; i < n && evals < budget; ++i) {
      for (double sign : {+1.0, -1.0}) {
        std::vector<double> trial = best.x;
        trial[i] = clamp_to(trial[i] + sign * step[i], b.lower[i], b.upper[i]);
        if (trial[i] == best.x[i]) continue;
        const double ft = f(trial);
        ++evals;
        if (ft < best.value) {
          best.x = std::move(trial);
          best.value = ft;
          improved = true;
          break;
        }
        if (evals >= budget) break;
      }
      if (improved) break;
    }
    if (improved) {
      for (std::size_t i = 0; i < n; ++i)
        step[i] = std::min(2.0 * step[i], 0.5 * range[i]);
    } else {
      bool all_small = true;
      for (std::size_t i = 0; i < n; ++i) {
        step[i] *= 0.5;
        if (step[i] > mesh_tol * range[i]) all_small = false;
      }
      if (all_small) {
        best.mesh_converged = true;
        break;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt on a residual vector with box projection and a central
// finite-difference Jacobian.
// ---------------------------------------------------------------------------

using ResidualFn = std::function<void(std::span<const double>, std::vector<double>&)>;

double sum_sq(const std::vector<double>& r) {
  double s = 0;
  for (double v : r) s += v * v;
  return s;
}

Eigen::MatrixXd numeric_jacobian(const ResidualFn& residuals, std::vector<double> p,
                                 const ParameterBounds& b, int m) {
  const int n = int(p.size());
  Eigen::MatrixXd jac(m, n);
  std::vector<double> r_plus(m), r_minus(m);
  for (int j = 0; j < n; ++j) {
    const double scale = std::max({std::abs(p[j]), 1e-3 * (b.upper[j] - b.lower[j])});
    const double h = std::max(1e-7 * scale, 1e-12);
    const double orig = p[j];
    double hi = std::min(orig + h, b.upper[j]);
    double lo = std::max(orig - h, b.lower[j]);
    if (hi == lo) {  // degenerate box; fall back to unprojected step
      hi = orig + h;
      lo = orig - h;
    }
    p[j] = hi;
    residuals(p, r_plus);
    p[j] = lo;
    residuals(p, r_minus);
    p[j] = orig;
    const double denom = hi - lo;
    for (int i = 0; i < m; ++i) jac(i, j) = (r_plus[i] - r_minus[i]) / denom;
  }
  return jac;
}

struct LMOutcome {
  std::vector<double> p;
  double ssr = kInf;
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd jacobian;  // at the optimum
};

LMOutcome levenberg_marquardt(const ResidualFn& residuals, int m, std::vector<double> p,
                              const ParameterBounds& b, int max_iter = 200,
                              double ssr_scale = 0.0) {
  const int n = int(p.size());
  std::vector<double> r(m), r_trial(m);
  residuals(p, r);
  double ssr = sum_sq(r);
  const double ssr_floor = 1e-16 * ssr;  // residual collapse = converged

  double lambda = 1e-3;
  LMOutcome out;
  out.p = p;
  out.ssr = ssr;
  int tiny_drop_streak = 0;
  double ssr_window_start = ssr;

  for (int iter = 0; iter < max_iter; ++iter) {
    out.iterations = iter + 1;
    if (iter % 10 == 0) {
      // Windowed progress check: stalling over ten iterations is converged.
      // Once the unexplained variance is below 1e-6 of the data variance,
      // slow crawling along flat directions no longer counts as progress.
      const double rel_tol = ssr_window_start <= 1e-6 * ssr_scale ? 0.05 : 1e-4;
      if (iter > 0 &&
          ssr_window_start - ssr < rel_tol * ssr_window_start + 1e-10 * ssr_scale) {
        out.converged = true;
        break;
      }
      ssr_window_start = ssr;
    }
    const Eigen::MatrixXd jac = numeric_jacobian(residuals, p, b, m);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd g(n);
    {
      Eigen::Map<const Eigen::VectorXd> rv(r.data(), m);
      g = jac.transpose() * rv;
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + ssr)) {
      out.converged = true;
      break;
    }

    bool stepped = false;
    for (int inner = 0; inner < 30; ++inner) {
      Eigen::MatrixXd a = jtj;
      for (int k = 0; k < n; ++k) a(k, k) += lambda * (jtj(k, k) + 1e-12);
      const Eigen::VectorXd delta = a.ldlt().solve(-g);
      if (!delta.allFinite()) {
        lambda *= 4.0;
        continue;
      }
      std::vector<double> trial(p);
      for (int k = 0; k < n; ++k)
        trial[k] = clamp_to(trial[k] + delta(k), b.lower[k], b.upper[k]);
      residuals(trial, r_trial);
      const double ssr_trial = sum_sq(r_trial);
      if (ssr_trial < ssr) {
        double rel_step = 0;
        for (int k = 0; k < n; ++k) {
          const double range = b.upper[k] - b.lower[k];
          rel_step = std::max(rel_step, std::abs(trial[k] - p[k]) / range);
        }
        const double rel_drop = (ssr - ssr_trial) / std::max(ssr, 1e-300);
        p = std::move(trial);
        r = r_trial;
        ssr = ssr_trial;
        lambda = std::max(lambda / 3.0, 1e-14);
        stepped = true;
        tiny_drop_streak = rel_drop < 1e-8 ? tiny_drop_streak + 1 : 0;
        if (rel_step < 1e-11 || rel_drop < 1e-10 || tiny_drop_streak >= 3 ||
            ssr <= ssr_floor) {
          out.converged = true;
        }
        break;
      }
      lambda *= 4.0;
    }
    out.p = p;
    out.ssr = ssr;
    if (!stepped) {
      // No descent direction at the smallest trust region: stationary.
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }
  out.jacobian = numeric_jacobian(residuals, out.p, b, m);
  return out;
}

// Linearized 95% half-widths from (J^T J)^-1 * ssr/(m-n).
std::vector<double> confidence_from_jacobian(const Eigen::MatrixXd& jac, double ssr,
                                             std::vector<std::string>* flags) {
  const int m = int(jac.rows());
  const int n = int(jac.cols());
  std::vector<double> ci(n, kInf);
  if (m <= n) {
    if (flags) flags->push_back("no-degrees-of-freedom");
    return ci;
  }
  const double s2 = ssr / double(m - n);
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  Eigen::MatrixXd cov;
  if (lu.isInvertible()) {
    cov = lu.inverse() * s2;
  } else {
    cov = jtj.completeOrthogonalDecomposition().pseudoInverse() * s2;
    if (flags) flags->push_back("ill-conditioned");
  }
  const double t = student_t_975(m - n);
  for (int k = 0; k < n; ++k) {
    const double v = cov(k, k);
    ci[k] = v > 0 ? t * std::sqrt(v) : kInf;
  }
  return ci;
}

FitResult make_result(std::vector<std::string> names, const LMOutcome& lm,
                      std::vector<std::string> flags = {}) {
  FitResult result;
  result.names = std::move(names);
  result.parameters = lm.p;
  result.flags = std::move(flags);
  result.ci95 = confidence_from_jacobian(lm.jacobian, lm.ssr, &result.flags);
  result.residual_norm = std::sqrt(lm.ssr);
  result.converged = lm.converged;
  result.iterations = lm.iterations;
  return result;
}

// Shared driver: pattern-search stage seeded at `init` (plus deterministic
// perturbed restarts), then LM refinement.
LMOutcome search_then_refine(const ResidualFn& residuals, int m,
                             const std::vector<double>& init, const ParameterBounds& b,
                             std::uint64_t seed, int search_budget,
                             double ssr_scale = 0.0) {
  Objective ssr_of = [&](std::span<const double> p) {
    std::vector<double> r(m);
    residuals(p, r);
    return sum_sq(r);
  };

  int evals = 0;
  std::vector<double> start(init);
  clamp_vector(start, b);
  PatternResult best =
      pattern_search(ssr_of, start, b, search_budget / 2, evals, 0.05, 1e-9);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int k = 0; k < 2 && evals < search_budget; ++k) {
    std::vector<double> jittered(start);
    for (std::size_t i = 0; i < jittered.size(); ++i) {
      const double range = b.upper[i] - b.lower[i];
      jittered[i] = clamp_to(jittered[i] + 0.1 * range * unit(rng), b.lower[i], b.upper[i]);
    }
    PatternResult alt = pattern_search(ssr_of, jittered, b, search_budget, evals, 0.05, 1e-9);
    if (alt.value < best.value) best = alt;
  }

  return levenberg_marquardt(residuals, m, best.x, b, 200, ssr_scale);
}

double centered_sum_sq(std::span<const double> y) {
  double mean = 0;
  for (double v : y) mean += v;
  mean /= double(y.size());
  double acc = 0;
  for (double v : y) acc += (v - mean) * (v - mean);
  return acc;
}

// Dominant-frequency estimate (cyclic, per unit of t) via a coarse
// periodogram with parabolic peak refinement. Deterministic.
double dominant_frequency(std::span<const double> t, std::span<const double> y) {
  const std::size_t n = t.size();
  const double span = t.back() - t.front();
  const double dt = span / double(n - 1);
  double mean = 0;
  for (double v : y) mean += v;
  mean /= double(n);

  const double f_lo = 0.25 / span;
  const double f_hi = 0.5 / dt;
  const int n_freq = 600;
  double best_f = f_lo, best_power = -1.0;
  double prev_power = 0, prev2_power = 0, prev_f = 0;
  double best_left = 0, best_right = 0;
  for (int j = 0; j < n_freq; ++j) {
    const double f = f_lo + (f_hi - f_lo) * j / (n_freq - 1);
    double re = 0, im = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = 2.0 * kPi * f * (t[i] - t.front());
      re += (y[i] - mean) * std::cos(ph);
      im += (y[i] - mean) * std::sin(ph);
    }
    const double power = re * re + im * im;
    if (j >= 2 && prev_power > best_power && prev_power >= power &&
        prev_power >= prev2_power) {
      best_power = prev_power;
      best_f = prev_f;
      best_left = prev2_power;
      best_right = power;
    }
    prev2_power = prev_power;
    prev_power = power;
    prev_f = f;
  }
  if (best_power < 0) return f_lo;
  // Parabolic refinement on the three-point neighbourhood.
  const double denom = best_left - 2 * best_power + best_right;
  if (denom < 0) {
    const double df = (f_hi - f_lo) / (n_freq - 1);
    const double shift = 0.5 * (best_left - best_right) / denom;
    return best_f - shift * df;
  }
  return best_f;
}

// Envelope decay estimate from block maxima of |y - offset|.
std::pair<double, double> envelope_tau(std::span<const double> t,
                                       std::span<const double> y, double offset,
                                       double freq) {
  const double span = t.back() - t.front();
  const double period = freq > 0 ? 1.0 / freq : span / 4;
  const int n_blocks = std::max(3, std::min(24, int(span / period)));
  const double block = span / n_blocks;
  std::vector<double> bt(n_blocks, 0.0), bv(n_blocks, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    int k = std::min(n_blocks - 1, int((t[i] - t.front()) / block));
    const double a = std::abs(y[i] - offset);
    if (a > bv[k]) {
      bv[k] = a;
      bt[k] = t[i];
    }
  }
  // Log-linear regression on the positive block maxima.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int k = 0; k < n_blocks; ++k) {
    if (bv[k] <= 0) continue;
    const double lx = bt[k], ly = std::log(bv[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  double amp = 0.5, tau = span;
  if (count >= 2) {
    const double denom = count * sxx - sx * sx;
    if (std::abs(denom) > 1e-30) {
      const double slope = (count * sxy - sx * sy) / denom;
      const double inter = (sy - slope * sx) / count;
      amp = std::exp(inter);
      tau = slope < -1e-12 ? -1.0 / slope : 4 * span;
    }
  }
  return {tau, amp};
}

}  // namespace

double FitResult::parameter(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return parameters[i];
  throw std::out_of_range("FitResult: unknown parameter '" + std::string(name) + "'");
}

double FitResult::ci(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return ci95[i];
  throw std::out_of_range("FitResult: unknown parameter '" + std::string(name) + "'");
}

bool FitResult::has_flag(std::string_view flag) const {
  for (const auto& f : flags)
    if (f == flag) return true;
  return false;
}

double student_t_975(int dof) {
  if (dof < 1) return kInf;
  // Cornish-Fisher style expansion of the t quantile around the normal one;
  // accurate to <1e-4 for dof >= 3 and adequate below.
  const double z = 1.959963984540054;
  const double z3 = z * z * z, z5 = z3 * z * z, z7 = z5 * z * z, z9 = z7 * z * z;
  const double v = dof;
  double t = z + (z3 + z) / (4 * v) + (5 * z5 + 16 * z3 + 3 * z) / (96 * v * v) +
             (3 * z7 + 19 * z5 + 17 * z3 - 15 * z) / (384 * v * v * v) +
             (79 * z9 + 776 * z7 + 1482 * z5 - 1920 * z3 - 945 * z) /
                 (92160 * v * v * v * v);
  if (dof == 1) t = 12.7062;
  if (dof == 2) t = 4.30265;
  return t;
}

FitResult global_then_local(const Objective& objective, const ParameterBounds& bounds,
                            const SearchOptions& options,
                            std::span<const double> initial_guess) {
  check_bounds(bounds);
  if (options.budget <= 0) throw std::invalid_argument("global_then_local: budget <= 0");
  const std::size_t n = bounds.lower.size();

  std::vector<std::vector<double>> starts;
  if (!initial_guess.empty()) {
    if (initial_guess.size() != n)
      throw std::invalid_argument("global_then_local: guess/bounds size mismatch");
    starts.emplace_back(initial_guess.begin(), initial_guess.end());
  }
  {
    std::vector<double> center(n);
    for (std::size_t i = 0; i < n; ++i)
      center[i] = 0.5 * (bounds.lower[i] + bounds.upper[i]);
    starts.push_back(std::move(center));
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (int(starts.size()) < std::max(1, options.n_starts)) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
      x[i] = bounds.lower[i] + (bounds.upper[i] - bounds.lower[i]) * unit(rng);
    starts.push_back(std::move(x));
  }

  const int global_budget = (options.budget * 7) / 10;
  const int per_start = std::max(8, global_budget / int(starts.size()));
  int evals = 0;

  PatternResult best;
  for (auto& start : starts) {
    if (evals >= global_budget) break;
    const int quota = std::min(global_budget, evals + per_start);
    PatternResult r = pattern_search(objective, start, bounds, quota, evals,
                                     options.initial_step_fraction, 1e-6);
    if (r.value < best.value) best = r;
  }

  // Local polish from the best basin down to the mesh tolerance. Restarts
  // re-center the poll lattice on the current iterate, which removes the
  // residual lattice-alignment error of a single pass.
  PatternResult polished = best;
  double polish_step = 0.01;
  for (int pass = 0; pass < 3 && evals < options.budget; ++pass) {
    PatternResult refined = pattern_search(objective, polished.x, bounds,
                                           options.budget, evals, polish_step,
                                           options.mesh_tolerance);
    if (refined.value <= polished.value) polished = refined;
    polish_step *= 0.01;
  }

  FitResult result;
  result.names.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.names[i] = "x" + std::to_string(i);
  result.parameters = polished.x;
  result.ci95.assign(n, 0.0);
  result.residual_norm = polished.value;
  result.converged = polished.mesh_converged;
  result.iterations = evals;
  result.flags.push_back("no-ci");
  return result;
}

// ---------------------------------------------------------------------------
// Model functions
// ---------------------------------------------------------------------------

double decaying_sinusoid_model(double t_us, double omega_mhz, double tau_us, double n,
                               double phase, double offset, double amplitude) {
  const double envelope = std::exp(-std::pow(std::max(t_us, 0.0) / tau_us, n));
  return amplitude * envelope * std::sin(2.0 * kPi * omega_mhz * t_us + phase) + offset;
}

double hahn_echo_model(double t_us, double tau_us, double n, double a1, double a2,
                       double omega_rad_per_us, double phase, double offset) {
  const double envelope = std::exp(-std::pow(std::max(t_us, 0.0) / tau_us, n));
  const double s = std::sin(0.5 * omega_rad_per_us * t_us + phase);
  return envelope * (a1 + a2 * s * s) + offset;
}

double lorentzian_model(double x, double center, double fwhm, double amplitude,
                        double offset) {
  const double u = 2.0 * (x - center) / fwhm;
  return offset + amplitude / (1.0 + u * u);
}

// ---------------------------------------------------------------------------
// fit_decaying_sinusoid
// ---------------------------------------------------------------------------

FitResult fit_decaying_sinusoid(std::span<const double> t_us, std::span<const double> y,
                                std::uint64_t seed) {
  if (t_us.size() != y.size() || t_us.size() < 8)
    throw std::invalid_argument("fit_decaying_sinusoid: need >= 8 matching samples");

  const double span = t_us.back() - t_us.front();
  double y_min = kInf, y_max = -kInf, y_mean = 0;
  for (double v : y) {
    y_min = std::min(y_min, v);
    y_max = std::max(y_max, v);
    y_mean += v;
  }
  y_mean /= double(y.size());
  const double range = std::max(y_max - y_min, 1e-12);

  const double f0 = dominant_frequency(t_us, y);
  const auto [tau0, amp0] = envelope_tau(t_us, y, y_mean, f0);

  // Parameters: omega, tau, n, phase, offset, amplitude.
  ParameterBounds b;
  b.lower = {std::max(0.05 / span, 0.2 * f0), std::max(0.02 * span, 0.05 / f0), 0.5,
             -kPi, y_min - range, 0.05 * range};
  b.upper = {std::min(3.0 * f0, double(y.size()) * 0.5 / span), 200.0 * span, 3.0, kPi,
             y_max + range, 3.0 * range};
  std::vector<double> init = {f0,
                              clamp_to(tau0, b.lower[1], b.upper[1]),
                              1.0,
                              0.0,
                              y_mean,
                              clamp_to(amp0, b.lower[5], b.upper[5])};

  // Pick the better of a few deterministic phase seeds before searching.
  ResidualFn residuals = [&](std::span<const double> p, std::vector<double>& r) {
    for (std::size_t i = 0; i < t_us.size(); ++i)
      r[i] = decaying_sinusoid_model(t_us[i], p[0], p[1], p[2], p[3], p[4], p[5]) - y[i];
  };
  {
    std::vector<double> r(t_us.size());
    double best = kInf;
    double best_phase = 0;
    for (double ph : {-2.356, -1.571, -0.785, 0.0, 0.785, 1.571, 2.356, 3.14}) {
      init[3] = clamp_to(ph, -kPi, kPi);
      residuals(init, r);
      const double s = sum_sq(r);
      if (s < best) {
        best = s;
        best_phase = init[3];
      }
    }
    init[3] = best_phase;
  }

  LMOutcome lm = search_then_refine(residuals, int(t_us.size()), init, b, seed, 1200,
                                    centered_sum_sq(y));
  return make_result({"omega_r", "tau", "n", "phase", "offset", "amplitude"}, lm);
}

FitResult fit_decaying_sinusoid(const RabiTrace& trace, std::uint64_t seed) {
  std::vector<double> t_us(trace.times_s.size());
  for (std::size_t i = 0; i < t_us.size(); ++i) t_us[i] = trace.times_s[i] * 1e6;
  return fit_decaying_sinusoid(t_us, trace.population, seed);
}

// ---------------------------------------------------------------------------
// fit_hahn_echo
// ---------------------------------------------------------------------------

FitResult fit_hahn_echo(std::span<const double> t_us, std::span<const double> y,
                        std::uint64_t seed) {
  if (t_us.size() != y.size() || t_us.size() < 9)
    throw std::invalid_argument("fit_hahn_echo: need >= 9 matching samples");

  const double span = t_us.back() - t_us.front();
  double y_min = kInf, y_max = -kInf;
  for (double v : y) {
    y_min = std::min(y_min, v);
    y_max = std::max(y_max, v);
  }
  const double range = std::max(y_max - y_min, 1e-12);

  const double y_scale = centered_sum_sq(y);

  // Offset from the decayed tail; envelope estimate from the early samples.
  double tail = 0;
  const std::size_t n_tail = std::max<std::size_t>(2, y.size() / 10);
  for (std::size_t i = y.size() - n_tail; i < y.size(); ++i) tail += y[i];
  tail /= double(n_tail);

  // The decay trend dominates the raw spectrum; estimate the modulation
  // frequency on the moving-average detrended signal instead.
  std::vector<double> detrended(y.size());
  {
    const int half = std::max<int>(3, int(y.size()) / 16);
    for (int i = 0; i < int(y.size()); ++i) {
      const int lo = std::max(0, i - half);
      const int hi = std::min(int(y.size()) - 1, i + half);
      double mean = 0;
      for (int k = lo; k <= hi; ++k) mean += y[k];
      detrended[i] = y[i] - mean / double(hi - lo + 1);
    }
  }
  const double f0 = dominant_frequency(t_us, detrended);
  double modulation = 0.0;
  for (std::size_t i = 0; i < y.size() / 2; ++i)
    modulation = std::max(modulation, std::abs(detrended[i]));

  const auto [tau0, amp0] = envelope_tau(t_us, y, tail, f0);
  (void)amp0;
  const double head = y.front() - tail;

  // Parameters: tau, n, a1, a2, omega, phase, offset.
  ParameterBounds b;
  b.lower = {std::max(0.02 * span, 1e-6), 0.5, -2.0 * range, -2.0 * range, 0.0, -kPi,
             y_min - range};
  b.upper = {200.0 * span, 4.0, 2.0 * range, 2.0 * range,
             2.0 * kPi * double(y.size()) * 0.5 / span, kPi, y_max + range};
  std::vector<double> init = {clamp_to(tau0, b.lower[0], b.upper[0]),
                              1.0,
                              clamp_to(head, b.lower[2], b.upper[2]),
                              clamp_to(2.0 * modulation, b.lower[3], b.upper[3]),
                              2.0 * kPi * f0,
                              0.0,
                              tail};

  ResidualFn residuals = [&](std::span<const double> p, std::vector<double>& r) {
    for (std::size_t i = 0; i < t_us.size(); ++i)
      r[i] = hahn_echo_model(t_us[i], p[0], p[1], p[2], p[3], p[4], p[5], p[6]) - y[i];
  };

  // The phase/frequency landscape has secondary minima that trap a single
  // descent; probe a deterministic grid of phase, modulation-sign and
  // frequency-scale seeds with short refinements and continue from the best.
  {
    std::vector<double> best_init = init;
    double best = kInf;
    for (double freq_scale : {1.0, 0.5, 2.0}) {
      for (double ph : {-1.257, -0.628, 0.0, 0.628, 1.257}) {
        for (double sign : {+1.0, -1.0}) {
          std::vector<double> candidate = init;
          candidate[4] = clamp_to(freq_scale * init[4], b.lower[4], b.upper[4]);
          candidate[5] = ph;
          candidate[3] = clamp_to(sign * init[3], b.lower[3], b.upper[3]);
          candidate[2] = clamp_to(head - 0.5 * candidate[3], b.lower[2], b.upper[2]);
          const LMOutcome probe = levenberg_marquardt(residuals, int(t_us.size()),
                                                      candidate, b, 40, y_scale);
          if (probe.ssr < best) {
            best = probe.ssr;
            best_init = probe.p;
          }
        }
      }
    }
    init = best_init;
  }

  LMOutcome lm = search_then_refine(residuals, int(t_us.size()), init, b, seed, 1600,
                                    y_scale);

  // The model is invariant under (a1,a2,p) -> (a1+a2,-a2,p+pi/2) and under
  // p -> p+pi. Report the representative with a2 >= 0 and p in (-pi/2, pi/2]
  // and evaluate the covariance there.
  {
    auto& p = lm.p;
    if (p[3] < 0) {
      p[2] += p[3];
      p[3] = -p[3];
      p[5] += 0.5 * kPi;
    }
    while (p[5] > 0.5 * kPi) p[5] -= kPi;
    while (p[5] <= -0.5 * kPi) p[5] += kPi;
    lm.jacobian = numeric_jacobian(residuals, p, b, int(t_us.size()));
  }

  // A pure stretched exponential (a2 = 0) leaves omega and phase free; the
  // full model can then distort tau. Fit the reduced model as well and keep
  // it when it explains the data equally well.
  {
    ParameterBounds rb;
    rb.lower = {b.lower[0], b.lower[1], b.lower[2], b.lower[6]};
    rb.upper = {b.upper[0], b.upper[1], b.upper[2], b.upper[6]};
    ResidualFn reduced = [&](std::span<const double> p, std::vector<double>& r) {
      for (std::size_t i = 0; i < t_us.size(); ++i)
        r[i] = hahn_echo_model(t_us[i], p[0], p[1], p[2], 0.0, 1.0, 0.0, p[3]) - y[i];
    };
    const std::vector<double> rinit = {init[0], init[1], init[2], init[6]};
    LMOutcome rlm =
        search_then_refine(reduced, int(t_us.size()), rinit, rb, seed, 800, y_scale);
    if (rlm.ssr <= lm.ssr * (1.0 + 1e-9) + 1e-30) {
      LMOutcome promoted;
      promoted.p = {rlm.p[0], rlm.p[1], rlm.p[2], 0.0, init[4], 0.0, rlm.p[3]};
      promoted.ssr = rlm.ssr;
      promoted.iterations = lm.iterations + rlm.iterations;
      promoted.converged = rlm.converged;
      promoted.jacobian = numeric_jacobian(residuals, promoted.p, b, int(t_us.size()));
      FitResult result = make_result({"tau", "n", "a1", "a2", "omega", "phase", "offset"},
                                     promoted, {"omega-unidentifiable"});
      return result;
    }
  }

  std::vector<std::string> flags;
  const double a1 = lm.p[2], a2 = lm.p[3];
  if (std::abs(a2) < 1e-3 * (std::abs(a1) + std::abs(a2) + 1e-3 * range))
    flags.push_back("omega-unidentifiable");
  return make_result({"tau", "n", "a1", "a2", "omega", "phase", "offset"}, lm,
                     std::move(flags));
}

FitResult fit_hahn_echo(const RabiTrace& trace, std::uint64_t seed) {
  std::vector<double> t_us(trace.times_s.size());
  for (std::size_t i = 0; i < t_us.size(); ++i) t_us[i] = trace.times_s[i] * 1e6;
  return fit_hahn_echo(t_us, trace.population, seed);
}

// ---------------------------------------------------------------------------
// fit_lorentzian
// ---------------------------------------------------------------------------

FitResult fit_lorentzian(std::span<const double> x, std::span<const double> y,
                         std::uint64_t seed) {
  if (x.size() != y.size() || x.size() < 4)
    throw std::invalid_argument("fit_lorentzian: need >= 4 matching samples");

  double y_min = kInf, y_max = -kInf;
  std::size_t i_max = 0, i_min = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > y_max) {
      y_max = y[i];
      i_max = i;
    }
    if (y[i] < y_min) {
      y_min = y[i];
      i_min = i;
    }
  }
  const double range = std::max(y_max - y_min, 1e-12);
  std::vector<double> sorted_y(y.begin(), y.end());
  std::nth_element(sorted_y.begin(), sorted_y.begin() + sorted_y.size() / 2,
                   sorted_y.end());
  const double median = sorted_y[sorted_y.size() / 2];

  const bool peak_up = (y_max - median) >= (median - y_min);
  const double c0 = peak_up ? y_min : y_max;
  const double a0 = peak_up ? range : -range;
  const double center0 = peak_up ? x[i_max] : x[i_min];

  // Half-height width estimate around the extremum.
  const double half = c0 + 0.5 * a0;
  double left = x.front(), right = x.back();
  const std::size_t i_peak = peak_up ? i_max : i_min;
  for (std::size_t i = i_peak; i-- > 0;) {
    if ((peak_up && y[i] < half) || (!peak_up && y[i] > half)) {
      left = x[i];
      break;
    }
  }
  for (std::size_t i = i_peak + 1; i < y.size(); ++i) {
    if ((peak_up && y[i] < half) || (!peak_up && y[i] > half)) {
      right = x[i];
      break;
    }
  }
  const double x_span = x.back() - x.front();
  double fwhm0 = right - left;
  if (!(fwhm0 > 0)) fwhm0 = 0.25 * x_span;

  ParameterBounds b;
  double dx_min = x_span;
  for (std::size_t i = 1; i < x.size(); ++i) dx_min = std::min(dx_min, x[i] - x[i - 1]);
  b.lower = {x.front() - 0.5 * x_span, std::max(0.2 * dx_min, 1e-12 * x_span), -4 * range,
             y_min - range};
  b.upper = {x.back() + 0.5 * x_span, 6.0 * x_span, 4 * range, y_max + range};
  std::vector<double> init = {center0, fwhm0, a0, c0};

  ResidualFn residuals = [&](std::span<const double> p, std::vector<double>& r) {
    for (std::size_t i = 0; i < x.size(); ++i)
      r[i] = lorentzian_model(x[i], p[0], p[1], p[2], p[3]) - y[i];
  };

  LMOutcome lm = search_then_refine(residuals, int(x.size()), init, b, seed, 1200,
                                    centered_sum_sq(y));
  return make_result({"center", "fwhm", "amplitude", "offset"}, lm);
}

// ---------------------------------------------------------------------------
// fit_sqrt_power_line
// ---------------------------------------------------------------------------

FitResult fit_sqrt_power_line(std::span<const double> powers_w,
                              std::span<const double> omegas_mhz, bool zero_intercept) {
  if (powers_w.size() != omegas_mhz.size() || powers_w.size() < 3)
    throw std::invalid_argument("fit_sqrt_power_line: need >= 3 matching samples");
  for (double p : powers_w)
    if (!(p > 0)) throw std::invalid_argument("fit_sqrt_power_line: powers must be > 0");

  const std::size_t m = powers_w.size();
  std::vector<double> u(m);
  for (std::size_t i = 0; i < m; ++i) u[i] = std::sqrt(powers_w[i]);

  FitResult result;
  result.names = {"slope", "intercept"};
  result.converged = true;
  result.iterations = 1;

  if (zero_intercept) {
    double suy = 0, suu = 0;
    for (std::size_t i = 0; i < m; ++i) {
      suy += u[i] * omegas_mhz[i];
      suu += u[i] * u[i];
    }
    const double slope = suy / suu;
    double ssr = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = slope * u[i] - omegas_mhz[i];
      ssr += r * r;
    }
    const double s2 = ssr / double(m - 1);
    result.parameters = {slope, 0.0};
    result.ci95 = {student_t_975(int(m) - 1) * std::sqrt(s2 / suu), 0.0};
    result.residual_norm = std::sqrt(ssr);
    result.flags.push_back("zero-intercept-constrained");
    return result;
  }

  double su = 0, sy = 0, suu = 0, suy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    su += u[i];
    sy += omegas_mhz[i];
    suu += u[i] * u[i];
    suy += u[i] * omegas_mhz[i];
  }
  const double denom = double(m) * suu - su * su;
  if (std::abs(denom) < 1e-30)
    throw std::invalid_argument("fit_sqrt_power_line: degenerate abscissae");
  const double slope = (double(m) * suy - su * sy) / denom;
  const double intercept = (sy - slope * su) / double(m);

  double ssr = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = slope * u[i] + intercept - omegas_mhz[i];
    ssr += r * r;
  }
  const double s2 = ssr / double(m - 2);
  const double var_slope = s2 * double(m) / denom;
  const double var_inter = s2 * suu / denom;
  const double t = student_t_975(int(m) - 2);

  result.parameters = {slope, intercept};
  result.ci95 = {t * std::sqrt(var_slope), t * std::sqrt(var_inter)};
  result.residual_norm = std::sqrt(ssr);
  return result;
}

// ---------------------------------------------------------------------------
// fit_s11_resonance
// ---------------------------------------------------------------------------

FitResult fit_s11_resonance(std::span<const double> freqs_ghz,
                            std::span<const std::complex<double>> gamma,
                            std::uint64_t seed) {
  if (freqs_ghz.size() != gamma.size() || freqs_ghz.size() < 5)
    throw std::invalid_argument("fit_s11_resonance: need >= 5 matching samples");
  const std::size_t m = freqs_ghz.size();

  std::size_t i_min = 0;
  double mag_min = kInf;
  for (std::size_t i = 0; i < m; ++i) {
    const double mag = std::abs(gamma[i]);
    if (mag < mag_min) {
      mag_min = mag;
      i_min = i;
    }
  }
  const double f0_0 = freqs_ghz[i_min];
  const double dq0 = clamp_to(gamma[i_min].real(), -0.999, 0.999);

  // |Gamma|^2 rises from dq^2 at resonance to 1; the half-rise points sit at
  // u = +-1, i.e. one loaded linewidth apart.
  const double half_level = 0.5 * (dq0 * dq0 + 1.0);
  double left = freqs_ghz.front(), right = freqs_ghz.back();
  for (std::size_t i = i_min; i-- > 0;) {
    if (std::norm(gamma[i]) > half_level) {
      left = freqs_ghz[i];
      break;
    }
  }
  for (std::size_t i = i_min + 1; i < m; ++i) {
    if (std::norm(gamma[i]) > half_level) {
      right = freqs_ghz[i];
      break;
    }
  }
  const double span = freqs_ghz.back() - freqs_ghz.front();
  double width = right - left;
  if (!(width > 0)) width = 0.25 * span;
  const double ql0 = f0_0 / width;

  ParameterBounds b;
  b.lower = {freqs_ghz.front(), std::max(1.0, 0.02 * ql0), -0.999999};
  b.upper = {freqs_ghz.back(), 500.0 * ql0, 0.999999};
  std::vector<double> init = {f0_0, ql0, dq0};

  ResidualFn residuals = [&](std::span<const double> p, std::vector<double>& r) {
    const double f0 = p[0], ql = p[1], dq = p[2];
    for (std::size_t i = 0; i < m; ++i) {
      const double u = 2.0 * ql * (freqs_ghz[i] - f0) / f0;
      const std::complex<double> model =
          std::complex<double>(dq, -u) / std::complex<double>(1.0, u);
      r[2 * i] = model.real() - gamma[i].real();
      r[2 * i + 1] = model.imag() - gamma[i].imag();
    }
  };

  std::vector<double> stacked(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    stacked[2 * i] = gamma[i].real();
    stacked[2 * i + 1] = gamma[i].imag();
  }
  LMOutcome lm = search_then_refine(residuals, int(2 * m), init, b, seed, 1200,
                                    centered_sum_sq(stacked));

  const double f0 = lm.p[0], ql = lm.p[1], dq = lm.p[2];
  const double qi = 2.0 * ql / (1.0 - dq);
  const double qe = 2.0 * ql / (1.0 + dq);

  std::vector<std::string> flags;
  if (span * ql / f0 < 3.0) flags.push_back("insufficient-span");

  // Delta-method propagation from the internal (f0, ql, dq) covariance.
  FitResult result;
  result.names = {"f0", "q_loaded", "q_internal", "q_external"};
  result.parameters = {f0, ql, qi, qe};
  result.residual_norm = std::sqrt(lm.ssr);
  result.converged = lm.converged;
  result.iterations = lm.iterations;
  result.flags = std::move(flags);

  const int dof = int(2 * m) - 3;
  result.ci95.assign(4, kInf);
  if (dof > 0) {
    const Eigen::MatrixXd jtj = lm.jacobian.transpose() * lm.jacobian;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    Eigen::MatrixXd cov;
    if (lu.isInvertible()) {
      cov = lu.inverse() * (lm.ssr / dof);
    } else {
      cov = jtj.completeOrthogonalDecomposition().pseudoInverse() * (lm.ssr / dof);
      result.flags.push_back("ill-conditioned");
    }
    const double t = student_t_975(dof);
    auto propagated = [&](const Eigen::Vector3d& g) {
      const double v = g.transpose() * cov * g;
      return v > 0 ? t * std::sqrt(v) : kInf;
    };
    result.ci95[0] = propagated({1, 0, 0});
    result.ci95[1] = propagated({0, 1, 0});
    result.ci95[2] = propagated({0, 2.0 / (1.0 - dq), 2.0 * ql / ((1.0 - dq) * (1.0 - dq))});
    result.ci95[3] =
        propagated({0, 2.0 / (1.0 + dq), -2.0 * ql / ((1.0 + dq) * (1.0 + dq))});
  }
  return result;
}

}  // namespace nvdr
