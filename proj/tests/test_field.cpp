#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "nvdr/field.hpp"
#include "nvdr/spin.hpp"
#include "oracles.hpp"

using namespace nvdr;

TEST_CASE("beam waist from the lens formula") {
  BeamModel beam;  // defaults: D = 2.2 mm, 520 nm, f = 15.29 mm, M = 1
  const double w0 = beam_waist_um(beam);
  CHECK(w0 == doctest::Approx(2.30).epsilon(0.005));
  CHECK(2 * w0 == doctest::Approx(4.6).epsilon(0.005));

  SUBCASE("doubling the collimated diameter halves the waist") {
    BeamModel wide = beam;
    wide.collimated_diameter_mm *= 2.0;
    CHECK(beam_waist_um(wide) == doctest::Approx(0.5 * w0).epsilon(1e-12));
  }
  SUBCASE("ellipticity enters quadratically") {
    BeamModel m2 = beam;
    m2.ellipticity_m = 2.0;
    CHECK(beam_waist_um(m2) == doctest::Approx(4.0 * w0).epsilon(1e-12));
    CHECK(beam_waist_um(m2) == doctest::Approx(9.2).epsilon(0.005));
  }
}

TEST_CASE("spot radius growth along the axis") {
  BeamModel beam;
  const double w0 = beam_waist_um(beam);
  CHECK(spot_radius_um(beam, 0.0) == doctest::Approx(w0).epsilon(1e-12));

  const double w0_mm = w0 * 1e-3;
  const double rayleigh_mm =
      std::numbers::pi * w0_mm * w0_mm / (beam.wavelength_nm * 1e-6);
  CHECK(spot_radius_um(beam, rayleigh_mm) ==
        doctest::Approx(w0 * std::numbers::sqrt2).epsilon(1e-12));

  // Scalar recomputation at the diamond half-thickness.
  const double z = 0.125;
  const double q = z * beam.wavelength_nm * 1e-6 / (std::numbers::pi * w0_mm * w0_mm);
  CHECK(spot_radius_um(beam, z) ==
        doctest::Approx(w0 * std::sqrt(1 + q * q)).epsilon(1e-12));
  CHECK(spot_radius_um(beam, z) == doctest::Approx(spot_radius_um(beam, -z)).epsilon(1e-12));
}

TEST_CASE("laser intensity profile") {
  BeamModel beam;
  beam.mu_x_mm = 0.01;
  beam.mu_y_mm = -0.02;

  CHECK(laser_intensity(beam, beam.mu_x_mm, beam.mu_y_mm, 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("1/e^2 point at one spot radius") {
    const double z = 0.05;
    const double wz_mm = spot_radius_um(beam, z) * 1e-3;
    const double on_axis = laser_intensity(beam, beam.mu_x_mm, beam.mu_y_mm, z);
    CHECK(laser_intensity(beam, beam.mu_x_mm + wz_mm, beam.mu_y_mm, z) ==
          doctest::Approx(on_axis * std::exp(-2.0)).epsilon(1e-12));
  }

  SUBCASE("transverse-plane integral is conserved along z") {
    auto plane_integral = [&](double z) {
      const double wz_mm = spot_radius_um(beam, z) * 1e-3;
      const double half = 6.0 * wz_mm;
      auto inner = [&](double x) {
        return oracle::simpson(
            [&](double y) { return laser_intensity(beam, x, y, z); },
            beam.mu_y_mm - half, beam.mu_y_mm + half, 400);
      };
      return oracle::simpson(inner, beam.mu_x_mm - half, beam.mu_x_mm + half, 400);
    };
    const double at_focus = plane_integral(0.0);
    const double off_focus = plane_integral(0.1);
    CHECK(std::abs(off_focus - at_focus) / at_focus < 1e-6);
  }

  SUBCASE("reflection symmetry about the beam center") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (int i = 0; i < 50; ++i) {
      const double x = u(rng), y = u(rng), z = u(rng);
      const double direct = laser_intensity(beam, x, y, z);
      const double mirrored =
          laser_intensity(beam, 2 * beam.mu_x_mm - x, 2 * beam.mu_y_mm - y, z);
      CHECK(direct == doctest::Approx(mirrored).epsilon(1e-12));
    }
  }
}

namespace {

FieldGrid make_test_grid() {
  FieldGrid grid;
  grid.origin_mm = {-1.0, -1.0, -0.2};
  grid.spacing_mm = {0.5, 0.5, 0.1};
  grid.dims = {5, 5, 5};
  grid.vectors_mt.reserve(125);
  for (int ix = 0; ix < 5; ++ix)
    for (int iy = 0; iy < 5; ++iy)
      for (int iz = 0; iz < 5; ++iz)
        grid.vectors_mt.push_back(
            {0.1 * ix + 0.01 * iz, 0.2 * iy - 0.015 * ix, 1.0 - 0.05 * (ix + iy + iz)});
  return grid;
}

}  // namespace

TEST_CASE("field grid interpolation") {
  const FieldGrid grid = make_test_grid();

  SUBCASE("node identity") {
    const Vec3 p{-1.0 + 2 * 0.5, -1.0 + 3 * 0.5, -0.2 + 1 * 0.1};
    const Vec3 v = b1_at(grid, p, 1.0);
    const Vec3& expected = grid.node(2, 3, 1);
    CHECK(v.x == doctest::Approx(expected.x).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(expected.y).epsilon(1e-12));
    CHECK(v.z == doctest::Approx(expected.z).epsilon(1e-12));
  }
  SUBCASE("midpoint along x is the node mean") {
    const Vec3 p{-1.0 + 1.5 * 0.5, -1.0, -0.2};
    const Vec3 v = grid.interpolate(p);
    const Vec3 mean = 0.5 * (grid.node(1, 0, 0) + grid.node(2, 0, 0));
    CHECK(v.x == doctest::Approx(mean.x).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(mean.y).epsilon(1e-12));
    CHECK(v.z == doctest::Approx(mean.z).epsilon(1e-12));
  }
  SUBCASE("sqrt-power scaling is exact") {
    const Vec3 p{0.13, -0.42, 0.05};
    const Vec3 v1 = b1_at(grid, p, 1.0);
    const Vec3 v4 = b1_at(grid, p, 4.0);
    CHECK(v4.x == doctest::Approx(2.0 * v1.x).epsilon(1e-14));
    CHECK(v4.y == doctest::Approx(2.0 * v1.y).epsilon(1e-14));
    CHECK(v4.z == doctest::Approx(2.0 * v1.z).epsilon(1e-14));
  }
  SUBCASE("out-of-bounds positions are a hard error") {
    CHECK_THROWS_AS(grid.interpolate({1.01, 0.0, 0.0}), std::out_of_range);
    CHECK_THROWS_AS(grid.interpolate({0.0, 0.0, -0.21}), std::out_of_range);
  }
}

TEST_CASE("field grid file round trip") {
  const FieldGrid grid = make_test_grid();
  const auto path = std::filesystem::temp_directory_path() / "nvdr_grid_test.csv";
  grid.save(path.string());
  const FieldGrid loaded = FieldGrid::load(path.string());
  std::filesystem::remove(path);

  REQUIRE(loaded.dims == grid.dims);
  CHECK(loaded.origin_mm.x == doctest::Approx(grid.origin_mm.x).epsilon(1e-14));
  CHECK(loaded.spacing_mm.z == doctest::Approx(grid.spacing_mm.z).epsilon(1e-14));
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    const Vec3 p{-1.0 + 2.0 * u(rng), -1.0 + 2.0 * u(rng), -0.2 + 0.4 * u(rng)};
    const Vec3 a = grid.interpolate(p);
    const Vec3 b = loaded.interpolate(p);
    CHECK(a.x == doctest::Approx(b.x).epsilon(1e-9));
    CHECK(a.y == doctest::Approx(b.y).epsilon(1e-9));
    CHECK(a.z == doctest::Approx(b.z).epsilon(1e-9));
  }
}

TEST_CASE("shipped reconstructed field grid") {
  const FieldGrid grid =
      FieldGrid::load(std::string(NVDR_SOURCE_DIR) + "/fixtures/b1_grid_reconstructed.csv");
  CHECK(grid.dims == std::array<int, 3>{21, 21, 11});

  const Vec3 center = grid.interpolate({0, 0, 0});
  CHECK(norm(center) == doctest::Approx(13.08502).epsilon(1e-4));

  // Radial anchors of the reconstruction match the parametric profile.
  const Vec3 mid = grid.interpolate({0.5, 0, 0});
  CHECK(norm(mid) / norm(center) == doctest::Approx(0.625).epsilon(1e-3));

  // Mild axial sag, symmetric in z.
  const Vec3 top = grid.interpolate({0, 0, 0.125});
  const Vec3 bottom = grid.interpolate({0, 0, -0.125});
  CHECK(norm(top) == doctest::Approx(norm(bottom)).epsilon(1e-9));
  CHECK(norm(top) / norm(center) == doctest::Approx(0.97).epsilon(1e-3));
}

TEST_CASE("parametric source reproduces the measured ensemble slope") {
  // Mean effective drive over the four orientations at 1 W equals the
  // measured 211.6 MHz/sqrt(W) conversion slope.
  const ParametricB1 source;
  const SpinParams spin{};
  const Vec3 b1 = b1_at(source, {0, 0, 0}, 1.0);
  double mean = 0;
  for (const auto& axis : NVOrientation::standard_axes())
    mean += effective_drive_frequency_mhz(b1, axis, spin);
  mean /= 4.0;
  CHECK(mean == doctest::Approx(211.6).epsilon(1e-4));
}

TEST_CASE("parametric drive-field profile") {
  const ParametricB1 source;  // calibrated defaults

  SUBCASE("anchor points of the radial profile") {
    CHECK(source.radial_profile(0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(source.radial_profile(0.2) == doctest::Approx(0.93).epsilon(1e-4));
    CHECK(source.radial_profile(0.5) == doctest::Approx(0.625).epsilon(1e-4));
    CHECK(source.radial_profile(2.0) == doctest::Approx(ParametricB1::kProfileFloor));
  }
  SUBCASE("center homogeneity") {
    for (double x : {-0.2, -0.1, 0.1, 0.2})
      CHECK(source.radial_profile(x) >= 0.93 - 1e-5);
  }
  SUBCASE("tilt direction and sqrt-power scaling") {
    const Vec3 v = b1_at(source, {0, 0, 0}, 1.0);
    CHECK(norm(v) == doctest::Approx(source.b1_center_mt_per_sqrtw).epsilon(1e-12));
    const double tilt = std::atan2(v.x, v.z) * 180.0 / std::numbers::pi;
    CHECK(tilt == doctest::Approx(3.723).epsilon(1e-9));
    const Vec3 v4 = b1_at(source, {0, 0, 0}, 4.0);
    CHECK(norm(v4) == doctest::Approx(2.0 * norm(v)).epsilon(1e-12));
  }
}
