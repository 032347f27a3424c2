#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "nvdr/vec3.hpp"

namespace nvdr {

/// Focused Gaussian excitation beam.
struct BeamModel {
  double collimated_diameter_mm = 2.2;
  double wavelength_nm = 520.0;
  double focal_length_mm = 15.29;
  double ellipticity_m = 1.0;
  double mu_x_mm = 0.0;  // transverse displacement of the focus
  double mu_y_mm = 0.0;

  void validate() const;
};

/// Focused waist radius w0 = 4*M^2*lambda*f / (2*pi*D), in um.
double beam_waist_um(const BeamModel& beam);

/// Spot radius at axial offset z: w(z) = w0*sqrt(1 + (z*lambda/(pi*w0^2))^2).
double spot_radius_um(const BeamModel& beam, double z_mm);

/// Normalized excitation weight
///   (w0/wz)^2 * exp(-2*((x-mu_x)/wz)^2) * exp(-2*((y-mu_y)/wz)^2),
/// maximum 1 at the focus.
double laser_intensity(const BeamModel& beam, double x_mm, double y_mm, double z_mm);

/// Drive-field vectors sampled on a regular 3-D grid, normalized to 1 W of
/// input power. Node storage is row-major with z fastest.
struct FieldGrid {
  Vec3 origin_mm{};
  Vec3 spacing_mm{};
  std::array<int, 3> dims{};
  std::vector<Vec3> vectors_mt;  // per-node B1 at 1 W

  void validate() const;
  std::size_t node_index(int ix, int iy, int iz) const;
  const Vec3& node(int ix, int iy, int iz) const;
  Vec3 max_corner_mm() const;

  /// Trilinear interpolation at 1 W; throws std::out_of_range outside the grid.
  Vec3 interpolate(const Vec3& position_mm) const;

  /// File format: a one-line JSON header {origin, spacing, dims} followed by
  /// one "bx,by,bz" CSV row per node (z fastest).
  static FieldGrid load(const std::string& path);
  void save(const std::string& path) const;
};

/// Analytic fallback for the resonator mode when no simulated grid is
/// available: a raised-cosine radial profile with a constant floor,
/// directed along an axis tilted from [001].
///
/// Defaults are calibrated so that (a) the center amplitude reproduces the
/// measured 211.6 MHz/sqrt(W) ensemble Rabi slope and (b) the profile passes
/// through the two calibration anchor points (0.93 of center at r = 0.2 mm,
/// 5/8 of center at r = 0.5 mm).
struct ParametricB1 {
  double b1_center_mt_per_sqrtw = 13.08502;
  double falloff_scale_mm = 1.069882;
  double tilt_deg = 3.723;  // from [001], in the x-z plane

  static constexpr double kProfileFloor = 0.1644190;

  void validate() const;
  /// Radial profile, 1 at r = 0 decaying to kProfileFloor at the scale radius.
  double radial_profile(double r_mm) const;
};

using B1Field = std::variant<ParametricB1, FieldGrid>;

/// Drive field at a position for a given input power; scales as sqrt(power).
Vec3 b1_at(const ParametricB1& source, const Vec3& position_mm, double power_w);
Vec3 b1_at(const FieldGrid& source, const Vec3& position_mm, double power_w);
Vec3 b1_at(const B1Field& source, const Vec3& position_mm, double power_w);

}  // namespace nvdr
