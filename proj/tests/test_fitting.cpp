#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "nvdr/fitting.hpp"
#include "nvdr/resonator.hpp"

using namespace nvdr;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

// Deterministic Gaussian noise, independent of std library distributions.
std::vector<double> gaussian_noise(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1e-12, 1.0);
  std::vector<double> out(n);
  for (std::size_t i = 0; i + 1 < n; i += 2) {
    const double r = std::sqrt(-2.0 * std::log(u(rng)));
    const double phi = 2.0 * kPi * u(rng);
    out[i] = sigma * r * std::cos(phi);
    out[i + 1] = sigma * r * std::sin(phi);
  }
  if (n % 2 == 1) {
    const double r = std::sqrt(-2.0 * std::log(u(rng)));
    out[n - 1] = sigma * r * std::cos(2.0 * kPi * u(rng));
  }
  return out;
}

}  // namespace

TEST_CASE("student t quantile") {
  CHECK(student_t_975(10) == doctest::Approx(2.22814).epsilon(1e-4));
  CHECK(student_t_975(30) == doctest::Approx(2.04227).epsilon(1e-4));
  CHECK(student_t_975(300) == doctest::Approx(1.96793).epsilon(1e-4));
  CHECK(student_t_975(2) == doctest::Approx(4.30265).epsilon(1e-4));
}

TEST_CASE("decaying sinusoid: noiseless self-inverse") {
  const double omega = 8.0, tau = 0.5, n = 1.5, phase = 0.7, offset = 0.45, amp = 0.5;
  const auto t = linspace(0.0, 1.0, 400);
  std::vector<double> y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    y[i] = decaying_sinusoid_model(t[i], omega, tau, n, phase, offset, amp);

  const FitResult fit = fit_decaying_sinusoid(t, y);
  CHECK(fit.converged);
  CHECK(fit.parameter("omega_r") == doctest::Approx(omega).epsilon(1e-6));
  CHECK(fit.parameter("tau") == doctest::Approx(tau).epsilon(1e-6));
  CHECK(fit.parameter("n") == doctest::Approx(n).epsilon(1e-6));
  CHECK(fit.parameter("phase") == doctest::Approx(phase).epsilon(1e-6));
  CHECK(fit.parameter("offset") == doctest::Approx(offset).epsilon(1e-6));
  CHECK(fit.parameter("amplitude") == doctest::Approx(amp).epsilon(1e-6));
  CHECK(fit.residual_norm < 1e-8);
}

TEST_CASE("decaying sinusoid: 1% noise recovered within 2% (95th percentile)" *
          doctest::timeout(300)) {
  const double omega = 8.0, tau = 0.5, n = 1.5, phase = 0.7, offset = 0.45, amp = 0.5;
  const auto t = linspace(0.0, 1.0, 400);
  std::vector<double> clean(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    clean[i] = decaying_sinusoid_model(t[i], omega, tau, n, phase, offset, amp);

  std::vector<double> errors;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::vector<double> y = clean;
    const auto noise = gaussian_noise(y.size(), 0.01, seed);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise[i];
    const FitResult fit = fit_decaying_sinusoid(t, y, seed);
    errors.push_back(std::abs(fit.parameter("omega_r") - omega) / omega);
  }
  std::sort(errors.begin(), errors.end());
  CHECK(errors[94] < 0.02);
}

TEST_CASE("decaying sinusoid: doubling ratios across power-style traces") {
  // Trace triple mimicking +6 dB steps: omega, 2*omega, 4*omega.
  const double base = 6.0;
  std::vector<double> fitted;
  for (double omega : {base, 2 * base, 4 * base}) {
    const auto t = linspace(0.0, 10.0 / omega, 320);
    std::vector<double> y(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      y[i] = decaying_sinusoid_model(t[i], omega, 3.0 / omega, 1.3, -kPi / 2, 0.5, 0.5);
    fitted.push_back(fit_decaying_sinusoid(t, y).parameter("omega_r"));
  }
  CHECK(fitted[1] / fitted[0] == doctest::Approx(2.0).epsilon(0.02));
  CHECK(fitted[2] / fitted[1] == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("hahn echo: noiseless self-inverse") {
  const double tau = 45.0, n = 1.5, a1 = 0.1, a2 = 0.35, omega = 0.8, phase = 0.3,
               offset = 0.5;
  const auto t = linspace(0.0, 120.0, 300);
  std::vector<double> y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    y[i] = hahn_echo_model(t[i], tau, n, a1, a2, omega, phase, offset);

  const FitResult fit = fit_hahn_echo(t, y);
  CHECK(fit.converged);
  CHECK(fit.parameter("tau") == doctest::Approx(tau).epsilon(1e-6));
  CHECK(fit.parameter("n") == doctest::Approx(n).epsilon(1e-6));
  CHECK(fit.parameter("a1") == doctest::Approx(a1).epsilon(1e-5));
  CHECK(fit.parameter("a2") == doctest::Approx(a2).epsilon(1e-5));
  CHECK(fit.parameter("omega") == doctest::Approx(omega).epsilon(1e-6));
  CHECK(fit.parameter("offset") == doctest::Approx(offset).epsilon(1e-5));
  CHECK(!fit.has_flag("omega-unidentifiable"));
}

TEST_CASE("hahn echo: decay times across the physical range with noise" *
          doctest::timeout(300)) {
  for (double tau : {35.0, 45.0, 55.0}) {
    const auto t = linspace(0.0, 150.0, 300);
    std::vector<double> y(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      y[i] = hahn_echo_model(t[i], tau, 1.5, 0.12, 0.3, 0.6, 0.2, 0.5);
    const auto noise = gaussian_noise(y.size(), 0.01, 42 + std::uint64_t(tau));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise[i];

    const FitResult fit = fit_hahn_echo(t, y, 42);
    CHECK(std::abs(fit.parameter("tau") - tau) / tau < 0.10);
  }
}

TEST_CASE("hahn echo: vanishing modulation flags omega as unidentifiable") {
  const auto t = linspace(0.0, 120.0, 200);
  std::vector<double> y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    y[i] = hahn_echo_model(t[i], 45.0, 1.5, 0.4, 0.0, 0.8, 0.3, 0.5);
  const FitResult fit = fit_hahn_echo(t, y);
  CHECK(fit.has_flag("omega-unidentifiable"));
  CHECK(fit.parameter("tau") == doctest::Approx(45.0).epsilon(1e-3));
}

TEST_CASE("lorentzian fits") {
  SUBCASE("exact samples recover exactly") {
    const auto x = linspace(-10.0, 10.0, 81);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = lorentzian_model(x[i], 1.2, 3.4, 2.5, 0.4);
    const FitResult fit = fit_lorentzian(x, y);
    CHECK(fit.parameter("center") == doctest::Approx(1.2).epsilon(1e-7));
    CHECK(fit.parameter("fwhm") == doctest::Approx(3.4).epsilon(1e-7));
    CHECK(fit.parameter("amplitude") == doctest::Approx(2.5).epsilon(1e-7));
    CHECK(fit.parameter("offset") == doctest::Approx(0.4).epsilon(1e-7));
  }
  SUBCASE("inverted peak") {
    const auto x = linspace(-5.0, 5.0, 41);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = lorentzian_model(x[i], -0.7, 2.0, -1.5, 3.0);
    const FitResult fit = fit_lorentzian(x, y);
    CHECK(fit.parameter("center") == doctest::Approx(-0.7).epsilon(1e-7));
    CHECK(fit.parameter("amplitude") == doctest::Approx(-1.5).epsilon(1e-7));
  }
  SUBCASE("symmetric peak centers on the middle sample") {
    // Symmetric 3-point peak within a 7-point window.
    const std::vector<double> x{-3, -2, -1, 0, 1, 2, 3};
    std::vector<double> y;
    for (double xi : x) y.push_back(lorentzian_model(xi, 0.0, 2.5, 1.0, 0.1));
    const FitResult fit = fit_lorentzian(x, y);
    CHECK(fit.parameter("center") == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("too few points is an error") {
    const std::vector<double> x{0, 1, 2};
    const std::vector<double> y{0, 1, 0};
    CHECK_THROWS_AS(fit_lorentzian(x, y), std::invalid_argument);
  }
}

TEST_CASE("sqrt-power line fits") {
  SUBCASE("exact data recovers slope and zero intercept") {
    std::vector<double> p, w;
    for (double power : {1e-3, 4e-3, 1.6e-2, 6.4e-2}) {
      p.push_back(power);
      w.push_back(211.6 * std::sqrt(power));
    }
    const FitResult fit = fit_sqrt_power_line(p, w);
    CHECK(fit.parameter("slope") == doctest::Approx(211.6).epsilon(1e-10));
    CHECK(std::abs(fit.parameter("intercept")) < 1e-9);
  }
  SUBCASE("pairwise doubling is consistent with one global slope") {
    std::vector<double> p{2e-3, 8e-3, 3.2e-2}, w;
    for (double power : p) w.push_back(100.0 * std::sqrt(power));
    const FitResult fit = fit_sqrt_power_line(p, w);
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
      CHECK(w[i + 1] / w[i] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.parameter("slope") == doctest::Approx(100.0).epsilon(1e-10));
  }
  SUBCASE("heteroscedastic noise: slope CI covers truth >= 93/100") {
    const double slope = 211.6;
    std::vector<double> p;
    for (int i = 0; i < 20; ++i) p.push_back(1e-3 * std::pow(2.0, i / 19.0));
    int covered = 0;
    for (std::uint64_t seed = 501; seed <= 600; ++seed) {
      std::vector<double> w(p.size());
      const auto noise = gaussian_noise(p.size(), 1.0, seed);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double mean = slope * std::sqrt(p[i]);
        w[i] = mean * (1.0 + 0.05 * noise[i]);
      }
      const FitResult fit = fit_sqrt_power_line(p, w);
      if (std::abs(fit.parameter("slope") - slope) <= fit.ci("slope")) ++covered;
    }
    CHECK(covered >= 93);
  }
  SUBCASE("invalid inputs") {
    const std::vector<double> two{1.0, 2.0};
    CHECK_THROWS_AS(fit_sqrt_power_line(two, two), std::invalid_argument);
    const std::vector<double> p{1.0, 0.0, 2.0}, w{1, 2, 3};
    CHECK_THROWS_AS(fit_sqrt_power_line(p, w), std::invalid_argument);
  }
}

namespace {

void make_s11_trace(const ResonatorState& res, double half_span_ghz, int n,
                    std::vector<double>& freqs, std::vector<std::complex<double>>& gamma) {
  freqs = linspace(res.f0_ghz - half_span_ghz, res.f0_ghz + half_span_ghz, n);
  gamma.resize(freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) gamma[i] = s11_response(res, freqs[i]);
}

}  // namespace

TEST_CASE("s11 resonance fits") {
  SUBCASE("recovers the generating quality factors within 1%") {
    const ResonatorState res{2.967, 1275.0, 1328.0};
    std::vector<double> freqs;
    std::vector<std::complex<double>> gamma;
    make_s11_trace(res, 0.06, 241, freqs, gamma);
    const FitResult fit = fit_s11_resonance(freqs, gamma);
    CHECK(fit.parameter("f0") == doctest::Approx(2.967).epsilon(1e-6));
    CHECK(fit.parameter("q_internal") == doctest::Approx(1275.0).epsilon(0.01));
    CHECK(fit.parameter("q_external") == doctest::Approx(1328.0).epsilon(0.01));
    CHECK(fit.parameter("q_loaded") == doctest::Approx(650.5).epsilon(0.01));
  }
  SUBCASE("loaded-Q relation holds by construction") {
    const ResonatorState res{2.967, 752.0, 255.5};
    std::vector<double> freqs;
    std::vector<std::complex<double>> gamma;
    make_s11_trace(res, 0.2, 301, freqs, gamma);
    const FitResult fit = fit_s11_resonance(freqs, gamma);
    const double lhs = 1.0 / fit.parameter("q_loaded");
    const double rhs = 1.0 / fit.parameter("q_internal") + 1.0 / fit.parameter("q_external");
    CHECK(std::abs(lhs - rhs) < 1e-9 * lhs);
  }
  SUBCASE("critical coupling gives equal internal and external Q within CI") {
    const ResonatorState res{2.967, 900.0, 900.0};
    std::vector<double> freqs;
    std::vector<std::complex<double>> gamma;
    make_s11_trace(res, 0.08, 241, freqs, gamma);
    // A touch of noise so the covariance is meaningful.
    const auto noise = gaussian_noise(2 * gamma.size(), 1e-4, 9);
    for (std::size_t i = 0; i < gamma.size(); ++i)
      gamma[i] += std::complex<double>(noise[2 * i], noise[2 * i + 1]);
    const FitResult fit = fit_s11_resonance(freqs, gamma);
    const double diff = std::abs(fit.parameter("q_internal") - fit.parameter("q_external"));
    CHECK(diff <= 2.0 * (fit.ci("q_internal") + fit.ci("q_external")));
  }
  SUBCASE("over- and undercoupled branches are disambiguated by phase") {
    const ResonatorState over{2.967, 1275.0, 300.0};
    const ResonatorState under{2.967, 300.0, 1275.0};
    // |Gamma| is identical for the two configurations; only phase differs.
    std::vector<double> freqs;
    std::vector<std::complex<double>> g_over, g_under;
    make_s11_trace(over, 0.15, 241, freqs, g_over);
    make_s11_trace(under, 0.15, 241, freqs, g_under);
    for (std::size_t i = 0; i < freqs.size(); ++i)
      CHECK(std::abs(g_over[i]) == doctest::Approx(std::abs(g_under[i])).epsilon(1e-12));

    const FitResult f_over = fit_s11_resonance(freqs, g_over);
    const FitResult f_under = fit_s11_resonance(freqs, g_under);
    CHECK(f_over.parameter("q_internal") > f_over.parameter("q_external"));
    CHECK(f_under.parameter("q_internal") < f_under.parameter("q_external"));
    CHECK(f_over.parameter("q_internal") == doctest::Approx(1275.0).epsilon(0.01));
    CHECK(f_under.parameter("q_internal") == doctest::Approx(300.0).epsilon(0.01));
  }
  SUBCASE("narrow span sets the warning flag") {
    const ResonatorState res{2.967, 1275.0, 1328.0};
    std::vector<double> freqs;
    std::vector<std::complex<double>> gamma;
    make_s11_trace(res, 0.004, 61, freqs, gamma);  // < 2 linewidths
    const FitResult fit = fit_s11_resonance(freqs, gamma);
    CHECK(fit.has_flag("insufficient-span"));
  }
}

TEST_CASE("global-then-local driver") {
  SUBCASE("convex quadratic lands within 1e-9") {
    Objective quad = [](std::span<const double> x) {
      const double a = x[0] - 0.3, b = x[1] + 1.1;
      return 2.0 * a * a + 0.5 * b * b;
    };
    ParameterBounds bounds{{-5, -5}, {5, 5}};
    const FitResult fit = global_then_local(quad, bounds);
    CHECK(fit.converged);
    CHECK(std::abs(fit.parameters[0] - 0.3) < 1e-9);
    CHECK(std::abs(fit.parameters[1] + 1.1) < 1e-9);
  }
  SUBCASE("multimodal 3-D landscape: global basin found in >= 95/100 seeds") {
    Objective rastrigin = [](std::span<const double> x) {
      double acc = 10.0 * double(x.size());
      for (double v : x) acc += v * v - 10.0 * std::cos(2.0 * kPi * v);
      return acc;
    };
    ParameterBounds bounds{{-5.12, -5.12, -5.12}, {5.12, 5.12, 5.12}};
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      SearchOptions options;
      options.seed = seed;
      const FitResult fit = global_then_local(rastrigin, bounds, options);
      bool in_basin = true;
      for (double v : fit.parameters) in_basin = in_basin && std::abs(v) < 0.5;
      if (in_basin) ++hits;
    }
    CHECK(hits >= 95);
  }
  SUBCASE("same seed reproduces bit-identical results") {
    Objective bumpy = [](std::span<const double> x) {
      return std::sin(5 * x[0]) + 0.1 * x[0] * x[0] + std::cos(3 * x[1]);
    };
    ParameterBounds bounds{{-4, -4}, {4, 4}};
    SearchOptions options;
    options.seed = 1234;
    const FitResult a = global_then_local(bumpy, bounds, options);
    const FitResult b = global_then_local(bumpy, bounds, options);
    REQUIRE(a.parameters.size() == b.parameters.size());
    for (std::size_t i = 0; i < a.parameters.size(); ++i)
      CHECK(a.parameters[i] == b.parameters[i]);  // bitwise
    CHECK(a.iterations == b.iterations);
    CHECK(a.residual_norm == b.residual_norm);
  }
  SUBCASE("budget exhaustion reports non-convergence") {
    Objective quad = [](std::span<const double> x) { return x[0] * x[0]; };
    ParameterBounds bounds{{-1}, {1}};
    SearchOptions options;
    options.budget = 10;
    const FitResult fit = global_then_local(quad, bounds, options);
    CHECK(!fit.converged);
  }
}

TEST_CASE("fit results are invariant under time-axis rescaling") {
  // Same signal expressed in us and in ns: omega and tau rescale inversely.
  const double omega = 4.0, tau = 1.2, n = 1.4, phase = 0.4, offset = 0.3, amp = 0.6;
  const auto t_us = linspace(0.0, 2.5, 300);
  std::vector<double> y(t_us.size());
  for (std::size_t i = 0; i < t_us.size(); ++i)
    y[i] = decaying_sinusoid_model(t_us[i], omega, tau, n, phase, offset, amp);

  std::vector<double> t_ns(t_us.size());
  for (std::size_t i = 0; i < t_us.size(); ++i) t_ns[i] = t_us[i] * 1e3;

  const FitResult in_us = fit_decaying_sinusoid(t_us, y);
  const FitResult in_ns = fit_decaying_sinusoid(t_ns, y);
  CHECK(in_ns.parameter("omega_r") * 1e3 ==
        doctest::Approx(in_us.parameter("omega_r")).epsilon(1e-6));
  CHECK(in_ns.parameter("tau") * 1e-3 == doctest::Approx(in_us.parameter("tau")).epsilon(1e-6));
  CHECK(in_ns.parameter("n") == doctest::Approx(in_us.parameter("n")).epsilon(1e-6));
}
