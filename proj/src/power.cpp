#include "nvdr/power.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nvdr {

void LossChain::validate() const {
  if (stages.empty()) throw std::invalid_argument("LossChain: stage list is empty");
  for (const auto& stage : stages)
    if (!std::isfinite(stage.gain_db))
      throw std::invalid_argument("LossChain: non-finite gain for '" + stage.label + "'");
}

double chain_gain_db(const LossChain& chain) {
  chain.validate();
  double total = 0.0;
  for (const auto& stage : chain.stages) total += stage.gain_db;
  return total;
}

double power_at_antenna_w(double p_source_w, const LossChain& chain) {
  if (!(p_source_w > 0))
    throw std::invalid_argument("power_at_antenna: source power must be > 0");
  return p_source_w * std::pow(10.0, chain_gain_db(chain) / 10.0);
}

double tetrahedral_angle_deg() {
  return std::acos(1.0 / std::sqrt(3.0)) * 180.0 / std::numbers::pi;
}

ConversionResult conversion_pipeline(double slope_mhz_per_sqrtw, double alpha_deg,
                                     double gamma_e_mhz_per_mt) {
  if (!(slope_mhz_per_sqrtw > 0))
    throw std::invalid_argument("conversion_pipeline: slope must be > 0");
  if (!(alpha_deg > 0) || !(alpha_deg < 90))
    throw std::invalid_argument("conversion_pipeline: alpha must be in (0, 90) degrees");
  if (!(gamma_e_mhz_per_mt > 0))
    throw std::invalid_argument("conversion_pipeline: gamma_e must be > 0");

  const double sin_alpha = std::sin(alpha_deg * std::numbers::pi / 180.0);
  ConversionResult r;
  r.slope_mhz_per_sqrtw = slope_mhz_per_sqrtw;
  r.b1_perp_mt_per_sqrtw = std::numbers::sqrt2 * slope_mhz_per_sqrtw / gamma_e_mhz_per_mt;
  r.b1_total_mt_per_sqrtw = r.b1_perp_mt_per_sqrtw / sin_alpha;
  r.theoretical_rabi_mhz_per_sqrtw = slope_mhz_per_sqrtw / sin_alpha;
  return r;
}

LossChain loss_chain_from_json(const nlohmann::json& j) {
  LossChain chain;
  chain.reference_freq_ghz = j.value("reference_freq_ghz", 2.967);
  if (!j.contains("stages") || !j.at("stages").is_array())
    throw std::invalid_argument("LossChain: missing 'stages' array");
  for (const auto& stage : j.at("stages")) {
    chain.stages.push_back(
        {stage.at("label").get<std::string>(), stage.at("gain_db").get<double>()});
  }
  chain.validate();
  return chain;
}

nlohmann::json loss_chain_to_json(const LossChain& chain) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& stage : chain.stages)
    stages.push_back({{"label", stage.label}, {"gain_db", stage.gain_db}});
  return {{"reference_freq_ghz", chain.reference_freq_ghz}, {"stages", stages}};
}

nlohmann::json conversion_to_json(const ConversionResult& r) {
  return {{"slope_mhz_per_sqrtw", r.slope_mhz_per_sqrtw},
          {"b1_perp_mt_per_sqrtw", r.b1_perp_mt_per_sqrtw},
          {"b1_total_mt_per_sqrtw", r.b1_total_mt_per_sqrtw},
          {"theoretical_rabi_mhz_per_sqrtw", r.theoretical_rabi_mhz_per_sqrtw}};
}

}  // namespace nvdr
