#include "nvdr/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nvdr {

namespace {

std::string format_number(double v) {
  char buf[40];
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

std::vector<std::vector<double>> read_csv_columns(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::vector<std::vector<double>> columns;
  std::string line;
  std::size_t line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::string spaced = line;
    std::replace(spaced.begin(), spaced.end(), ',', ' ');
    std::istringstream row(spaced);
    std::vector<double> values;
    double v;
    while (row >> v) values.push_back(v);
    if (values.empty()) {
      if (header_allowed) {  // one text header row is tolerated
        header_allowed = false;
        continue;
      }
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": non-numeric row");
    }
    header_allowed = false;
    if (columns.empty()) columns.resize(values.size());
    if (values.size() != columns.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": ragged row (expected " +
                               std::to_string(columns.size()) + " columns)");
    for (std::size_t i = 0; i < values.size(); ++i) columns[i].push_back(values[i]);
  }
  if (columns.empty() || columns[0].empty())
    throw std::runtime_error(path + ": no rows");
  return columns;
}

void read_s11_csv(const std::string& path, std::vector<double>& freqs_ghz,
                  std::vector<std::complex<double>>& gamma) {
  const auto cols = read_csv_columns(path);
  if (cols.size() < 3)
    throw std::runtime_error(path + ": need freq,re,im columns");
  freqs_ghz = cols[0];
  gamma.resize(cols[0].size());
  for (std::size_t i = 0; i < gamma.size(); ++i) gamma[i] = {cols[1][i], cols[2][i]};
}

void write_trace_csv(const std::string& path, const RabiTrace& trace) {
  auto out = open_out(path);
  out << "time_s,population\n";
  for (std::size_t i = 0; i < trace.times_s.size(); ++i)
    out << format_number(trace.times_s[i]) << ',' << format_number(trace.population[i])
        << '\n';
}

void write_sweep_csv(const std::string& path, const SweepResult& sweep) {
  auto out = open_out(path);
  out << sweep.axis_label << ",omega_r_mhz,decay_rate_per_us,stretch_n,converged\n";
  for (const SweepPoint& p : sweep.points)
    out << format_number(p.axis_value) << ',' << format_number(p.omega_r_mhz) << ','
        << format_number(p.decay_rate_per_us) << ',' << format_number(p.stretch_n)
        << ',' << (p.converged ? 1 : 0) << '\n';
}

void write_odmr_csv(const std::string& path, const OdmrMap& map) {
  auto out = open_out(path);
  out << "b0_mt";
  for (double f : map.freqs_ghz) out << ',' << format_number(f);
  out << '\n';
  for (std::size_t i = 0; i < map.b0_mt.size(); ++i) {
    out << format_number(map.b0_mt[i]);
    for (std::size_t j = 0; j < map.freqs_ghz.size(); ++j)
      out << ',' << format_number(map.at(i, j));
    out << '\n';
  }
}

void write_tune_loop_csv(const std::string& path,
                         const std::vector<TuneLoopSample>& samples) {
  auto out = open_out(path);
  out << "t_s,f0_ghz,error_ghz,output_mw\n";
  for (const TuneLoopSample& s : samples)
    out << format_number(s.t_s) << ',' << format_number(s.f0_ghz) << ','
        << format_number(s.error_ghz) << ',' << format_number(s.output_mw) << '\n';
}

nlohmann::json fit_result_to_json(const FitResult& result) {
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json ci = nlohmann::json::object();
  for (std::size_t i = 0; i < result.names.size(); ++i) {
    params[result.names[i]] = result.parameters[i];
    ci[result.names[i]] =
        std::isfinite(result.ci95[i]) ? nlohmann::json(result.ci95[i]) : nlohmann::json();
  }
  return {{"parameters", params},
          {"ci95", ci},
          {"residual_norm", result.residual_norm},
          {"converged", result.converged},
          {"iterations", result.iterations},
          {"flags", result.flags}};
}

std::string tool_version() { return "nvdr 0.1.0"; }

}  // namespace nvdr
