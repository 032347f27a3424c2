#include "nvdr/field.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace nvdr {

void BeamModel::validate() const {
  if (!(collimated_diameter_mm > 0) || !(wavelength_nm > 0) || !(focal_length_mm > 0))
    throw std::invalid_argument("BeamModel: lengths must be > 0");
  if (!(ellipticity_m >= 1.0))
    throw std::invalid_argument("BeamModel: ellipticity must be >= 1");
}

double beam_waist_um(const BeamModel& beam) {
  beam.validate();
  const double lambda_mm = beam.wavelength_nm * 1e-6;
  const double m2 = beam.ellipticity_m * beam.ellipticity_m;
  const double w0_mm = 4.0 * m2 * lambda_mm * beam.focal_length_mm /
                       (2.0 * std::numbers::pi * beam.collimated_diameter_mm);
  return w0_mm * 1e3;
}

double spot_radius_um(const BeamModel& beam, double z_mm) {
  const double w0_mm = beam_waist_um(beam) * 1e-3;
  const double lambda_mm = beam.wavelength_nm * 1e-6;
  const double q = z_mm * lambda_mm / (std::numbers::pi * w0_mm * w0_mm);
  return w0_mm * std::sqrt(1.0 + q * q) * 1e3;
}

double laser_intensity(const BeamModel& beam, double x_mm, double y_mm, double z_mm) {
  const double w0 = beam_waist_um(beam) * 1e-3;
  const double wz = spot_radius_um(beam, z_mm) * 1e-3;
  const double gx = (x_mm - beam.mu_x_mm) / wz;
  const double gy = (y_mm - beam.mu_y_mm) / wz;
  const double axial = (w0 / wz) * (w0 / wz);
  return axial * std::exp(-2.0 * (gx * gx + gy * gy));
}

void FieldGrid::validate() const {
  for (int d : dims)
    if (d < 2) throw std::invalid_argument("FieldGrid: dims must be >= 2 per axis");
  if (!(spacing_mm.x > 0) || !(spacing_mm.y > 0) || !(spacing_mm.z > 0))
    throw std::invalid_argument("FieldGrid: spacing must be > 0");
  const std::size_t expected =
      std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
  if (vectors_mt.size() != expected)
    throw std::invalid_argument("FieldGrid: node count does not match dims");
  for (const Vec3& v : vectors_mt)
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
      throw std::invalid_argument("FieldGrid: non-finite node vector");
}

std::size_t FieldGrid::node_index(int ix, int iy, int iz) const {
  return (std::size_t(ix) * dims[1] + std::size_t(iy)) * dims[2] + std::size_t(iz);
}

const Vec3& FieldGrid::node(int ix, int iy, int iz) const {
  return vectors_mt[node_index(ix, iy, iz)];
}

Vec3 FieldGrid::max_corner_mm() const {
  return {origin_mm.x + spacing_mm.x * (dims[0] - 1),
          origin_mm.y + spacing_mm.y * (dims[1] - 1),
          origin_mm.z + spacing_mm.z * (dims[2] - 1)};
}

Vec3 FieldGrid::interpolate(const Vec3& p) const {
  const double ux = (p.x - origin_mm.x) / spacing_mm.x;
  const double uy = (p.y - origin_mm.y) / spacing_mm.y;
  const double uz = (p.z - origin_mm.z) / spacing_mm.z;
  const double eps = 1e-9;
  if (ux < -eps || uy < -eps || uz < -eps || ux > dims[0] - 1 + eps ||
      uy > dims[1] - 1 + eps || uz > dims[2] - 1 + eps)
    throw std::out_of_range("FieldGrid: position outside grid bounds");

  auto cell = [](double u, int n) {
    int i = int(std::floor(u));
    if (i < 0) i = 0;
    if (i > n - 2) i = n - 2;
    return std::pair<int, double>{i, u - i};
  };
  const auto [ix, fx] = cell(ux, dims[0]);
  const auto [iy, fy] = cell(uy, dims[1]);
  const auto [iz, fz] = cell(uz, dims[2]);

  Vec3 out{};
  for (int dx = 0; dx <= 1; ++dx) {
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dz = 0; dz <= 1; ++dz) {
        const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
        out = out + w * node(ix + dx, iy + dy, iz + dz);
      }
    }
  }
  return out;
}

FieldGrid FieldGrid::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("FieldGrid: cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line))
    throw std::runtime_error("FieldGrid: empty file " + path);

  FieldGrid grid;
  try {
    const auto header = nlohmann::json::parse(header_line);
    const auto& o = header.at("origin_mm");
    const auto& s = header.at("spacing_mm");
    const auto& d = header.at("dims");
    grid.origin_mm = {o.at(0), o.at(1), o.at(2)};
    grid.spacing_mm = {s.at(0), s.at(1), s.at(2)};
    grid.dims = {d.at(0), d.at(1), d.at(2)};
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("FieldGrid: bad header in " + path + ": " + e.what());
  }

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    Vec3 v;
    if (!(row >> v.x >> v.y >> v.z))
      throw std::runtime_error("FieldGrid: malformed node row in " + path);
    grid.vectors_mt.push_back(v);
  }
  grid.validate();
  return grid;
}

void FieldGrid::save(const std::string& path) const {
  validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("FieldGrid: cannot write " + path);
  nlohmann::json header = {
      {"origin_mm", {origin_mm.x, origin_mm.y, origin_mm.z}},
      {"spacing_mm", {spacing_mm.x, spacing_mm.y, spacing_mm.z}},
      {"dims", {dims[0], dims[1], dims[2]}},
  };
  out << header.dump() << '\n';
  char buf[96];
  for (const Vec3& v : vectors_mt) {
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", v.x, v.y, v.z);
    out << buf;
  }
}

void ParametricB1::validate() const {
  if (!(b1_center_mt_per_sqrtw > 0))
    throw std::invalid_argument("ParametricB1: center amplitude must be > 0");
  if (!(falloff_scale_mm > 0))
    throw std::invalid_argument("ParametricB1: falloff scale must be > 0");
  if (tilt_deg < 0 || tilt_deg >= 90)
    throw std::invalid_argument("ParametricB1: tilt must be in [0, 90) degrees");
}

double ParametricB1::radial_profile(double r_mm) const {
  const double r = std::abs(r_mm);
  if (r >= falloff_scale_mm) return kProfileFloor;
  const double c = std::cos(0.5 * std::numbers::pi * r / falloff_scale_mm);
  return kProfileFloor + (1.0 - kProfileFloor) * c * c;
}

Vec3 b1_at(const ParametricB1& source, const Vec3& position_mm, double power_w) {
  source.validate();
  if (power_w < 0) throw std::invalid_argument("b1_at: power must be >= 0");
  const double r = std::hypot(position_mm.x, position_mm.y);
  const double mag =
      source.b1_center_mt_per_sqrtw * source.radial_profile(r) * std::sqrt(power_w);
  const double t = source.tilt_deg * std::numbers::pi / 180.0;
  return {mag * std::sin(t), 0.0, mag * std::cos(t)};
}

Vec3 b1_at(const FieldGrid& source, const Vec3& position_mm, double power_w) {
  if (power_w < 0) throw std::invalid_argument("b1_at: power must be >= 0");
  return std::sqrt(power_w) * source.interpolate(position_mm);
}

Vec3 b1_at(const B1Field& source, const Vec3& position_mm, double power_w) {
  return std::visit([&](const auto& s) { return b1_at(s, position_mm, power_w); },
                    source);
}

}  // namespace nvdr
