#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace nvdr {

struct LossStage {
  std::string label;
  double gain_db = 0.0;
};

/// Ordered microwave gain/loss bookkeeping from source to antenna.
struct LossChain {
  std::vector<LossStage> stages;
  double reference_freq_ghz = 2.967;

  void validate() const;
};

/// Net chain gain in dB (sum of stage gains).
double chain_gain_db(const LossChain& chain);

/// Power delivered after the chain: p * 10^(gain/10).
double power_at_antenna_w(double p_source_w, const LossChain& chain);

/// Power-to-field conversion figures derived from a measured ensemble Rabi
/// slope. With alpha the angle between the drive field and the spin axis:
///   b1_perp  = sqrt(2)*slope/gamma_e
///   b1_total = b1_perp / sin(alpha)
///   theoretical_rabi = gamma_e*b1_total/sqrt(2) = slope/sin(alpha).
struct ConversionResult {
  double slope_mhz_per_sqrtw = 0.0;
  double b1_perp_mt_per_sqrtw = 0.0;
  double b1_total_mt_per_sqrtw = 0.0;
  double theoretical_rabi_mhz_per_sqrtw = 0.0;
};

ConversionResult conversion_pipeline(double slope_mhz_per_sqrtw, double alpha_deg,
                                     double gamma_e_mhz_per_mt);

/// Exact angle between a <111> spin axis and the [001] drive direction.
double tetrahedral_angle_deg();

LossChain loss_chain_from_json(const nlohmann::json& j);
nlohmann::json loss_chain_to_json(const LossChain& chain);
nlohmann::json conversion_to_json(const ConversionResult& result);

}  // namespace nvdr
