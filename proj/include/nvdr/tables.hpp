#pragma once

#include <string>
#include <vector>

namespace nvdr {

/// Monotone calibration curve sampled at strictly increasing abscissae.
/// Evaluation uses shape-preserving piecewise-cubic (Fritsch-Carlson)
/// interpolation, so a monotone table yields a monotone interpolant and
/// table nodes are reproduced exactly.
class CalibrationTable {
 public:
  CalibrationTable() = default;
  CalibrationTable(std::vector<double> x, std::vector<double> y);

  /// Two-column CSV (x,y); lines starting with '#' are ignored.
  static CalibrationTable load_csv(const std::string& path);

  /// Interpolated value; throws std::out_of_range outside [x_front, x_back].
  double operator()(double x) const;

  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }
  bool increasing() const { return increasing_; }
  std::size_t size() const { return x_.size(); }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> slope_;  // endpoint derivatives per node
  bool increasing_ = true;

  void build();
};

}  // namespace nvdr
