#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nvdr/fitting.hpp"
#include "nvdr/resonator.hpp"

using namespace nvdr;

namespace {
const std::string kFixtureDir = std::string(NVDR_SOURCE_DIR) + "/fixtures/";

ThermalPlant fixture_plant() {
  ThermalPlant plant;
  plant.tau_thermal_s = 3.0;
  plant.freq_vs_temp =
      CalibrationTable::load_csv(kFixtureDir + "thermal_freq_vs_temperature.csv");
  plant.freq_vs_laser_power =
      CalibrationTable::load_csv(kFixtureDir + "thermal_freq_vs_laser_power.csv");
  return plant;
}
}  // namespace

TEST_CASE("loaded quality factor") {
  CHECK(loaded_q(1275, 1328) == doctest::Approx(650.5).epsilon(1e-3));
  CHECK(loaded_q(1275, 1e12) == doctest::Approx(1275).epsilon(1e-8));
  CHECK(loaded_q(752, 252.7) == doctest::Approx(189.1).epsilon(1e-3));
  CHECK_THROWS_AS(loaded_q(0, 100), std::invalid_argument);

  SUBCASE("never exceeds either input") {
    for (double qi : {10.0, 500.0, 2e4})
      for (double qe : {3.0, 700.0, 1e5})
        CHECK(loaded_q(qi, qe) <= std::min(qi, qe));
  }
}

TEST_CASE("one-port reflection response") {
  ResonatorState critical{2.967, 900.0, 900.0};
  ResonatorState over{2.967, 1275.0, 300.0};
  ResonatorState under{2.967, 300.0, 1275.0};

  SUBCASE("far detuned reflection approaches unity") {
    CHECK(std::abs(s11_response(critical, 2.0)) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(std::abs(s11_response(over, 4.0)) == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("critical coupling nulls the reflection at resonance") {
    CHECK(std::abs(s11_response(critical, critical.f0_ghz)) < 1e-12);
  }
  SUBCASE("magnitude never exceeds unity") {
    for (double f = 2.8; f < 3.1; f += 0.0001) {
      CHECK(std::abs(s11_response(over, f)) <= 1.0 + 1e-12);
      CHECK(std::abs(s11_response(under, f)) <= 1.0 + 1e-12);
    }
  }
  SUBCASE("phase winding distinguishes the coupling regimes") {
    auto winding = [](const ResonatorState& s) {
      double total = 0.0, prev = std::arg(s11_response(s, 2.7));
      for (double f = 2.7; f <= 3.25; f += 1e-4) {
        double ph = std::arg(s11_response(s, f));
        double d = ph - prev;
        while (d > std::numbers::pi) d -= 2 * std::numbers::pi;
        while (d < -std::numbers::pi) d += 2 * std::numbers::pi;
        total += d;
        prev = ph;
      }
      return std::abs(total);
    };
    CHECK(winding(over) > 0.95 * 2 * std::numbers::pi);   // full traversal
    CHECK(winding(under) < std::numbers::pi);             // partial excursion
  }
}

TEST_CASE("enhancement profile") {
  ResonatorState res{2.967, 752.0, 255.49};  // loaded Q ~ 190.7
  const double bg = 0.142134;

  SUBCASE("half-power point at the loaded half width") {
    const double hwhm_mhz = 0.5 * res.f0_ghz / res.loaded_q() * 1e3;
    const double m = enhancement_factor(res, hwhm_mhz, 0.0);
    CHECK(m * m == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("symmetric and monotone in |detuning|") {
    double prev = enhancement_factor(res, 0.0, bg);
    for (double d = 2.0; d < 120.0; d += 2.0) {
      const double m = enhancement_factor(res, d, bg);
      CHECK(m == doctest::Approx(enhancement_factor(res, -d, bg)).epsilon(1e-14));
      CHECK(m < prev);
      prev = m;
    }
  }
  SUBCASE("on/off ratio set by the background floor") {
    const double on = enhancement_factor(res, 0.0, bg);
    const double off = enhancement_factor(res, 1e9, bg);
    CHECK(on / off == doctest::Approx(7.1).epsilon(1e-3));
  }
}

TEST_CASE("enhancement-squared detuning profile is a lorentzian of loaded width") {
  const ResonatorState res{2.967, 752.0, 255.49};
  const double bg = 0.142134;
  std::vector<double> delta, m_sq;
  for (double d = -60.0; d <= 60.01; d += 1.5) {
    delta.push_back(d);
    const double m = enhancement_factor(res, d, bg);
    m_sq.push_back(m * m);
  }
  const FitResult fit = fit_lorentzian(delta, m_sq);
  const double expected_fwhm = res.f0_ghz * 1e3 / res.loaded_q();
  CHECK(std::abs(fit.parameter("fwhm") - expected_fwhm) / expected_fwhm < 1e-6);
  CHECK(std::abs(fit.parameter("offset") - bg * bg) < 1e-9);
  CHECK(std::abs(fit.parameter("center")) < 1e-9);
}

TEST_CASE("reflection compensation gain") {
  CHECK(compensated_gain_db(-7.60) == doctest::Approx(-0.829).epsilon(2e-3));
  CHECK(compensated_gain_db(-1e9) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(compensated_gain_db(-3.010299957) == doctest::Approx(-3.010299957).epsilon(1e-9));
  CHECK(std::isinf(compensated_gain_db(0.0)));
  CHECK(compensated_gain_db(0.0) < 0);
  CHECK_THROWS_AS(compensated_gain_db(0.5), std::invalid_argument);
}

TEST_CASE("temperature calibration interpolation") {
  const ThermalPlant plant = fixture_plant();

  CHECK(temperature_to_frequency_ghz(plant, 17.0) == doctest::Approx(2.967).epsilon(1e-6));
  // Exact at a table node.
  CHECK(temperature_to_frequency_ghz(plant, 29.0) ==
        doctest::Approx(plant.freq_vs_temp(29.0)).epsilon(1e-15));
  CHECK_THROWS_AS(temperature_to_frequency_ghz(plant, 2.0), std::out_of_range);
  CHECK_THROWS_AS(temperature_to_frequency_ghz(plant, 80.0), std::out_of_range);

  SUBCASE("interpolant preserves the table's monotone rise") {
    double prev = temperature_to_frequency_ghz(plant, 5.0);
    for (int i = 1; i <= 1000; ++i) {
      const double t = 5.0 + (41.0 - 5.0) * i / 1000.0;
      const double f = temperature_to_frequency_ghz(plant, t);
      CHECK(f > prev);
      prev = f;
    }
  }
}

TEST_CASE("controller step behaviour") {
  ControllerState ctrl;
  ctrl.setpoint_ghz = 2.967;

  SUBCASE("zero error leaves the output unchanged") {
    auto [next, power] = controller_step(ctrl, 2.967, 0.05);
    CHECK(power == 0.0);
    CHECK(next.output_mw == ctrl.output_mw);
  }
  SUBCASE("zero gains give a constant output") {
    ctrl.k_p_mw_per_ghz = 0.0;
    ctrl.k_d_mw_s_per_ghz = 0.0;
    auto state = ctrl;
    for (int i = 0; i < 10; ++i) {
      auto [next, power] = controller_step(state, 2.95 + 0.001 * i, 0.05);
      CHECK(power == 0.0);
      state = next;
    }
  }
  SUBCASE("output is clamped to the actuator bounds") {
    auto [next, power] = controller_step(ctrl, 2.0, 0.05);
    CHECK(power == ctrl.max_output_mw);
    auto [next2, power2] = controller_step(ctrl, 3.9, 0.05);
    (void)next;
    (void)next2;
    CHECK(power2 == 0.0);
  }
}

TEST_CASE("closed loop settles after a step disturbance" * doctest::timeout(60)) {
  const ThermalPlant plant = fixture_plant();
  ControllerState ctrl;
  ctrl.setpoint_ghz = 2.967;

  const double dt = plant.tau_thermal_s / 100.0;
  const double t_step = 20.0 * plant.tau_thermal_s;
  auto disturbance = [&](double t) { return t >= t_step ? 0.010 : 0.0; };  // +10 MHz

  const int n_steps = int((t_step + 12.0 * plant.tau_thermal_s) / dt);
  const auto samples =
      simulate_tune_loop(plant, ctrl, plant.freq_vs_laser_power(0.0), dt, n_steps,
                         disturbance);

  // Settled before the disturbance...
  const int i_step = int(t_step / dt);
  CHECK(std::abs(samples[i_step - 1].error_ghz) < 0.5e-3);
  // ...rejected through the actuator (the shifted equilibrium needs about
  // 6.7 mW less heating)...
  const double p_pre = samples[i_step - 1].output_mw;
  const double p_post = samples.back().output_mw;
  CHECK(p_pre - p_post > 5.0);
  // ...and back within 0.5 MHz after 10 thermal time constants.
  const int i_settle = i_step + int(10.0 * plant.tau_thermal_s / dt);
  for (std::size_t i = i_settle; i < samples.size(); ++i)
    CHECK(std::abs(samples[i].error_ghz) < 0.5e-3);
}

TEST_CASE("closed loop is stable over 1e5 steps" * doctest::timeout(120)) {
  const ThermalPlant plant = fixture_plant();
  ControllerState ctrl;
  ctrl.setpoint_ghz = 2.967;
  const double dt = plant.tau_thermal_s / 100.0;
  // Slow sinusoidal disturbance keeps the loop exercised the whole run.
  auto disturbance = [&](double t) {
    return 0.004 * std::sin(2 * std::numbers::pi * t / (50.0 * plant.tau_thermal_s));
  };
  const auto samples = simulate_tune_loop(plant, ctrl, 2.94, dt, 100000, disturbance);
  for (const auto& s : samples) {
    CHECK(std::abs(s.error_ghz) < 0.05);
    CHECK(s.output_mw >= 0.0);
    CHECK(s.output_mw <= ctrl.max_output_mw);
  }
}

TEST_CASE("duty cycle compensation") {
  CHECK(duty_cycle_compensation_us(0.0, 40.0) == 40.0);
  CHECK(duty_cycle_compensation_us(40.0, 40.0) == 0.0);
  CHECK_THROWS_AS(duty_cycle_compensation_us(41.0, 40.0), std::invalid_argument);
  CHECK_THROWS_AS(duty_cycle_compensation_us(-1.0, 40.0), std::invalid_argument);

  SUBCASE("total on-time is constant over a varying schedule") {
    const double total = 40.0;
    double t1 = 0.5;
    for (int rep = 0; rep < 64; ++rep) {
      const double t2 = duty_cycle_compensation_us(t1, total);
      CHECK(t1 + t2 == doctest::Approx(total).epsilon(1e-15));
      t1 = std::fmod(t1 * 1.37 + 1.1, total);
    }
  }
}
