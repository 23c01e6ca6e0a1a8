#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "vitsim/perf_model.hpp"
#include "vitsim/simulator.hpp"
#include "vitsim/token_pruning.hpp"

namespace vitsim {

// JSON shapes for the control plane: hardware configs in, reports out.

inline nlohmann::json hw_to_json(const HardwareConfig& hw) {
  return nlohmann::json{{"chms", hw.chms},
                        {"pe_rows", hw.pe_rows},
                        {"pe_cols", hw.pe_cols},
                        {"pe_lanes", hw.pe_lanes},
                        {"block", hw.block},
                        {"buffer_depth", hw.buffer_depth},
                        {"dsp_per_unit", hw.dsp_per_unit},
                        {"lut_per_unit", hw.lut_per_unit},
                        {"em_throughput", hw.em_throughput},
                        {"sorter_width", hw.sorter_width},
                        {"clock_hz", hw.clock_hz},
                        {"balance", hw.lpt_balance ? "lpt" : "round_robin"}};
}

inline HardwareConfig hw_from_json(const nlohmann::json& j) {
  HardwareConfig hw;
  try {
    hw.chms = j.value("chms", hw.chms);
    hw.pe_rows = j.value("pe_rows", hw.pe_rows);
    hw.pe_cols = j.value("pe_cols", hw.pe_cols);
    hw.pe_lanes = j.value("pe_lanes", hw.pe_lanes);
    hw.block = j.value("block", hw.block);
    hw.buffer_depth = j.value("buffer_depth", hw.buffer_depth);
    hw.dsp_per_unit = j.value("dsp_per_unit", hw.dsp_per_unit);
    hw.lut_per_unit = j.value("lut_per_unit", hw.lut_per_unit);
    hw.em_throughput = j.value("em_throughput", hw.em_throughput);
    hw.sorter_width = j.value("sorter_width", hw.sorter_width);
    hw.clock_hz = j.value("clock_hz", hw.clock_hz);
    const std::string balance = j.value("balance", std::string("lpt"));
    if (balance != "lpt" && balance != "round_robin")
      throw std::invalid_argument(
          "hardware config: balance must be 'lpt' or 'round_robin'");
    hw.lpt_balance = balance == "lpt";
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("hardware config: ") + e.what());
  }
  hw.validate();
  return hw;
}

inline HardwareConfig load_hw_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("cannot open hardware config: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("hardware config " + path.string() + ": " +
                                e.what());
  }
  return hw_from_json(j);
}

inline nlohmann::json stage_cycles_to_json(const StageCycles& s) {
  return nlohmann::json{{"layernorm", s.layernorm},
                        {"qkv", s.qkv},
                        {"attention_scores", s.attn_scores},
                        {"softmax", s.softmax},
                        {"attention_values", s.attn_values},
                        {"projection", s.projection},
                        {"token_drop", s.token_drop},
                        {"mlp", s.mlp},
                        {"activation", s.activation},
                        {"residual", s.residual}};
}

inline nlohmann::json mac_counts_to_json(const MacCounts& m) {
  return nlohmann::json{{"layernorm", m.layernorm},
                        {"residual", m.residual},
                        {"qkv", m.qkv},
                        {"attention", m.attention},
                        {"projection", m.projection},
                        {"token_drop", m.token_drop},
                        {"mlp", m.mlp},
                        {"total", m.total()}};
}

inline nlohmann::json routing_to_json(const TokenRouting& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries)
    entries.push_back({e.id_old, e.id_new, e.kept});
  return nlohmann::json{{"kept_count", r.kept_count}, {"entries", entries}};
}

inline nlohmann::json sim_report_to_json(const SimReport& r,
                                         const HardwareConfig& hw) {
  nlohmann::json encoders = nlohmann::json::array();
  for (const auto& e : r.encoders) {
    nlohmann::json je{{"stage_cycles", stage_cycles_to_json(e.stages)},
                      {"total_cycles", e.stages.total()},
                      {"macs", mac_counts_to_json(e.macs)},
                      {"tokens_in", e.tokens_in},
                      {"tokens_out", e.tokens_out},
                      {"heads_kept", e.heads_kept},
                      {"tdm", e.tdm_ran}};
    if (e.tdm_ran) je["routing"] = routing_to_json(e.routing);
    encoders.push_back(std::move(je));
  }
  return nlohmann::json{
      {"stage_cycles", stage_cycles_to_json(r.stages)},
      {"total_cycles", r.total_cycles},
      {"compute_cycles", r.compute_cycles},
      {"latency_ms", r.latency_ms(hw)},
      {"clock_hz", hw.clock_hz},
      {"utilization", r.utilization},
      {"macs", mac_counts_to_json(r.macs)},
      {"imbalance",
       {{"max_over_mean_column_load", r.max_over_mean_load},
        {"chm_busy", r.chm_busy}}},
      {"token_counts", r.token_counts},
      {"logits", r.logits},
      {"encoders", encoders}};
}

inline nlohmann::json complexity_to_json(const ComplexityBreakdown& c) {
  return nlohmann::json{{"layernorm", c.layernorm},
                        {"residual", c.residual},
                        {"msa", c.msa},
                        {"token_drop", c.token_drop},
                        {"mlp", c.mlp},
                        {"total", c.total()}};
}

}  // namespace vitsim
