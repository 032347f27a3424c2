#pragma once

#include <complex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nvdr/ensemble.hpp"
#include "nvdr/fitting.hpp"
#include "nvdr/spin.hpp"

namespace nvdr {

/// Numeric CSV columns; '#'-prefixed lines and a single non-numeric header
/// row are skipped. Throws std::runtime_error with a "no rows" diagnostic on
/// files without data and on ragged rows.
std::vector<std::vector<double>> read_csv_columns(const std::string& path);

/// Complex reflection trace from a (freq, re, im) CSV.
void read_s11_csv(const std::string& path, std::vector<double>& freqs_ghz,
                  std::vector<std::complex<double>>& gamma);

void write_trace_csv(const std::string& path, const RabiTrace& trace);
void write_sweep_csv(const std::string& path, const SweepResult& sweep);
void write_odmr_csv(const std::string& path, const OdmrMap& map);
void write_tune_loop_csv(const std::string& path,
                         const std::vector<TuneLoopSample>& samples);

nlohmann::json fit_result_to_json(const FitResult& result);

/// Reported in every metadata sidecar so outputs can be regenerated.
std::string tool_version();

}  // namespace nvdr
