#include "nvdr/tables.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nvdr {

CalibrationTable::CalibrationTable(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  build();
}

void CalibrationTable::build() {
  if (x_.size() != y_.size() || x_.size() < 2)
    throw std::invalid_argument("CalibrationTable: need >= 2 matching samples");
  for (std::size_t i = 1; i < x_.size(); ++i)
    if (!(x_[i] > x_[i - 1]))
      throw std::invalid_argument("CalibrationTable: abscissae must be strictly increasing");

  const std::size_t n = x_.size();
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    delta[i] = (y_[i + 1] - y_[i]) / h[i];
  }

  bool inc = true, dec = true;
  for (double d : delta) {
    if (d <= 0) inc = false;
    if (d >= 0) dec = false;
  }
  if (!inc && !dec)
    throw std::invalid_argument("CalibrationTable: values must be strictly monotonic");
  increasing_ = inc;

  // Fritsch-Carlson derivative limits keep the interpolant monotone.
  slope_.assign(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0) {
      slope_[i] = 0.0;
    } else {
      const double w1 = 2 * h[i] + h[i - 1];
      const double w2 = h[i] + 2 * h[i - 1];
      slope_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0)
      s = 0.0;
    else if (d0 * d1 <= 0 && std::abs(s) > 3 * std::abs(d0))
      s = 3 * d0;
    return s;
  };
  slope_[0] = (n == 2) ? delta[0] : endpoint(h[0], h[1], delta[0], delta[1]);
  slope_[n - 1] =
      (n == 2) ? delta[0] : endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double CalibrationTable::operator()(double x) const {
  if (x < x_.front() || x > x_.back())
    throw std::out_of_range("CalibrationTable: abscissa outside calibrated range");
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  std::size_t i = (it == x_.begin()) ? 0 : (it - x_.begin() - 1);
  if (i >= x_.size() - 1) i = x_.size() - 2;

  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * y_[i] + h10 * h * slope_[i] + h01 * y_[i + 1] + h11 * h * slope_[i + 1];
}

CalibrationTable CalibrationTable::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("CalibrationTable: cannot open " + path);
  std::vector<double> x, y;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double a, b;
    if (row >> a >> b) {
      x.push_back(a);
      y.push_back(b);
    }
  }
  return CalibrationTable(std::move(x), std::move(y));
}

}  // namespace nvdr
