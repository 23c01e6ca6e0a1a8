#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "vitsim/model.hpp"
#include "vitsim/simulator.hpp"

namespace vitsim {

// Closed-form models: encoder MAC counts (dense and pruned), kernel cycle
// formulas, and the resource/buffer estimate. MAC counts follow the
// convention that one multiply-accumulate is one operation and LayerNorm /
// residual entries count one operation per element; softmax and GELU
// evaluations are not counted. Embedding and classifier costs are reported
// separately from the encoder totals.

struct ComplexityInputs {
  double batch = 1.0;
  std::size_t tokens = 197;    // N entering the encoder
  std::size_t dim = 384;       // D
  std::size_t head_dim = 64;   // per-head width
  std::size_t mlp_dim = 1536;  // dense MLP width
  std::size_t heads = 6;       // H
  // pruned-model parameters
  double alpha = 1.0;       // retained block fraction, QKV columns
  double alpha_proj = 1.0;  // retained block fraction, projection columns
  double alpha_mlp = 1.0;   // retained neuron fraction
  std::size_t heads_kept = 6;
  std::size_t tokens_kept = 197;  // N after the in-encoder token drop
  bool token_drop = true;         // include the drop-module term

  void validate_ratios() const {
    if (alpha < 0.0 || alpha > 1.0 || alpha_proj < 0.0 || alpha_proj > 1.0 ||
        alpha_mlp < 0.0 || alpha_mlp > 1.0)
      throw std::invalid_argument(
          "complexity inputs: retained ratios must lie in [0, 1]");
    if (heads_kept > heads || tokens_kept > tokens)
      throw std::invalid_argument(
          "complexity inputs: kept counts cannot exceed totals");
  }
};

struct ComplexityBreakdown {
  double layernorm = 0.0;
  double residual = 0.0;
  double msa = 0.0;
  double token_drop = 0.0;
  double mlp = 0.0;

  double total() const {
    return layernorm + residual + msa + token_drop + mlp;
  }
};

// Dense encoder: LayerNorm 2BND, residual 2BND, MSA 4BHNDD' + 2BHN^2D',
// MLP 2BND*Dmlp.
inline ComplexityBreakdown complexity_unpruned(const ComplexityInputs& in) {
  const double B = in.batch, N = double(in.tokens), D = double(in.dim);
  const double Dp = double(in.head_dim), H = double(in.heads);
  ComplexityBreakdown out;
  out.layernorm = 2.0 * B * N * D;
  out.residual = 2.0 * B * N * D;
  out.msa = 4.0 * B * H * N * D * Dp + 2.0 * B * H * N * N * Dp;
  out.mlp = 2.0 * B * N * D * double(in.mlp_dim);
  return out;
}

// Pruned encoder: LN1 BND + LN2 BNkD, residuals likewise, MSA with the
// retained-head and retained-block ratios, the drop-module bookkeeping
// term, and the neuron-compacted MLP. The drop term aggregates scores over
// the heads that still exist, so it uses the kept head count.
inline ComplexityBreakdown complexity_pruned(const ComplexityInputs& in) {
  in.validate_ratios();
  const double B = in.batch, N = double(in.tokens), D = double(in.dim);
  const double Dp = double(in.head_dim), Hk = double(in.heads_kept);
  const double Nk = double(in.tokens_kept);
  ComplexityBreakdown out;
  out.layernorm = B * N * D + B * Nk * D;
  out.residual = B * N * D + B * Nk * D;
  out.msa = B * Hk * N * Dp * D * (3.0 * in.alpha + in.alpha_proj) +
            2.0 * B * Hk * N * N * Dp;
  if (in.token_drop) out.token_drop = B * N * (Hk + N + D);
  out.mlp = 2.0 * B * Nk * D * double(in.mlp_dim) * in.alpha_mlp;
  return out;
}

inline double embedding_macs(const ModelConfig& cfg) {
  return double(cfg.tokens - 1) * double(cfg.patch_len()) * double(cfg.dim);
}

inline double classifier_macs(const ModelConfig& cfg) {
  return double(cfg.dim) * double(cfg.classes);
}

// Kernel cycle count for a sparse/dense block matmul of (M1 x M2) by
// (M2 x out_cols), output chunked per head_width columns, with uniform
// per-column retained fraction phi (phi = 1 for the dense mode).
inline double cycles_sbmm(std::size_t m1, std::size_t m2,
                          std::size_t out_cols, std::size_t head_width,
                          std::size_t block, double phi,
                          const HardwareConfig& hw) {
  const double row_tiles =
      std::ceil(double(ceil_div(m1, block)) * double(ceil_div(head_width, block)) /
                double(hw.pe_rows * hw.pe_cols));
  const double head_iters =
      std::ceil(double(ceil_div(out_cols, head_width)) / double(hw.chms));
  return row_tiles * head_iters * double(ceil_div(m2, block)) *
         double(hw.block_pair_cycles(block)) * phi;
}

// Head-wise dense variant: `heads` products of (M1 x M2) by (M2 x out_cols).
inline double cycles_dhbmm(std::size_t m1, std::size_t m2,
                           std::size_t out_cols, std::size_t heads,
                           std::size_t block, const HardwareConfig& hw) {
  const double row_tiles =
      std::ceil(double(ceil_div(m1, block)) * double(ceil_div(out_cols, block)) /
                double(hw.pe_rows * hw.pe_cols));
  const double head_iters = std::ceil(double(heads) / double(hw.chms));
  return row_tiles * head_iters * double(ceil_div(m2, block)) *
         double(hw.block_pair_cycles(block));
}

struct ResourceEstimate {
  double dsp = 0.0;
  double lut = 0.0;
  std::uint64_t buffer_words = 0;
};

// Compute units scale with pe_rows*chms*pe_cols*pe_lanes^2; buffers follow
// the feature/column/result split with the matched element-wise and token
// dropper buffers on top.
inline ResourceEstimate resource_model(const HardwareConfig& hw) {
  hw.validate();
  ResourceEstimate r;
  const double units = double(hw.pe_rows) * double(hw.chms) *
                       double(hw.pe_cols) * double(hw.pe_lanes) *
                       double(hw.pe_lanes);
  r.dsp = hw.dsp_per_unit * units;
  r.lut = hw.lut_per_unit * units;
  const std::uint64_t b2 = std::uint64_t(hw.block) * hw.block;
  const std::uint64_t feature = b2 * hw.pe_rows * hw.buffer_depth;
  const std::uint64_t column = b2 * hw.pe_cols * hw.buffer_depth;
  const std::uint64_t result = b2 * hw.pe_rows * hw.chms * hw.pe_cols;
  r.buffer_words = feature + column + result + 6 * std::max(result, feature);
  return r;
}

// Per-layer inputs for the analytic cycle composition.
struct EncoderCycleInputs {
  std::size_t tokens_in = 0;
  std::size_t tokens_out = 0;  // after the in-encoder drop (== tokens_in if none)
  std::size_t heads_kept = 0;
  std::size_t mlp_kept = 0;
  double alpha = 1.0;
  double alpha_proj = 1.0;
  bool token_drop = false;  // true only when the drop actually removes tokens
};

// Stage-by-stage analytic cycles for one encoder, mirroring the simulator's
// schedule. Exact against the simulator when every column of a chunk holds
// the same number of blocks and chunk widths divide evenly into the column
// bins.
inline StageCycles predict_encoder_cycles(const EncoderCycleInputs& in,
                                          const ModelConfig& cfg,
                                          const HardwareConfig& hw) {
  hw.validate();
  const std::size_t b = cfg.block;
  const std::size_t n = in.tokens_in, n_out = in.tokens_out;
  const std::size_t hk = in.heads_kept;
  const std::uint64_t unit = hw.block_pair_cycles(b);
  auto em = [&](std::uint64_t elems) { return detail::em_pass(elems, hw); };
  auto llu = [](double v) {
    return static_cast<std::uint64_t>(std::llround(v));
  };

  StageCycles s;
  s.layernorm = em(std::uint64_t(n) * cfg.dim) +
                em(std::uint64_t(n_out) * cfg.dim);
  s.residual = s.layernorm;
  s.qkv = llu(cycles_sbmm(n, cfg.dim, 3 * hk * cfg.head_dim, cfg.head_dim, b,
                          in.alpha, hw));
  s.attn_scores = llu(cycles_dhbmm(n, cfg.head_dim, n, hk, b, hw));
  // row-sum pass: a single output block column per head cannot spread over
  // the column bins, so its waves quantize by pe_rows alone
  s.attn_scores += ceil_div(hk, hw.chms) *
                   ceil_div(ceil_div(n, b), hw.pe_rows) *
                   ceil_div(n, b) * unit;
  s.softmax = 2 * em(std::uint64_t(hk) * n * n);
  s.attn_values = llu(cycles_dhbmm(n, n, cfg.head_dim, hk, b, hw));
  s.projection = llu(cycles_sbmm(n, hk * cfg.head_dim, cfg.dim, cfg.head_dim,
                                 b, in.alpha_proj, hw));
  if (in.token_drop) {
    const std::size_t dropped = n - n_out + 1;
    s.token_drop = em(std::uint64_t(hk) * n) +
                   tdhm_cycles(n, cfg.dim, dropped, hw).total();
  }
  s.mlp = llu(cycles_sbmm(n_out, cfg.dim, in.mlp_kept, cfg.head_dim, b, 1.0,
                          hw)) +
          llu(cycles_sbmm(n_out, in.mlp_kept, cfg.dim, cfg.head_dim, b, 1.0,
                          hw));
  s.activation = em(std::uint64_t(n_out) * in.mlp_kept);
  return s;
}

inline StageCycles predict_model_cycles(
    std::span<const EncoderCycleInputs> layers, const ModelConfig& cfg,
    const HardwareConfig& hw) {
  StageCycles total;
  for (const auto& l : layers) total += predict_encoder_cycles(l, cfg, hw);
  return total;
}

}  // namespace vitsim
