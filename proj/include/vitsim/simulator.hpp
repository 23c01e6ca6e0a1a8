#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "vitsim/block_matrix.hpp"
#include "vitsim/model.hpp"
#include "vitsim/reference.hpp"
#include "vitsim/token_pruning.hpp"

namespace vitsim {

// Cycle-accurate model of the multi-level parallel compute array. The
// numerical path reuses the reference kernels verbatim, so simulated outputs
// are bit-identical to the reference by construction; the timing path walks
// the same iteration structure the hardware would:
//
//   * the array has `chms` computing head modules, each a pe_rows x pe_cols
//     grid of PEs with pe_lanes^2 multipliers, so one b x b block product
//     costs ceil(b/pe_lanes)^2 * b cycles;
//   * a weight matrix is processed in output chunks of one head width; the
//     chunks are spread over the CHMs, ceil(chunks/chms) iterations, each
//     iteration as long as its slowest CHM;
//   * within a CHM the chunk's block columns are assigned to pe_cols column
//     bins (round robin, or the offline LPT balancer); each bin works
//     through its output blocks in column order, pe_rows blocks per wave,
//     and the bins advance in lockstep so a wave costs its largest block;
//   * element-wise work (LayerNorm, residuals, exp/normalize, GELU, token
//     shuffling) streams through the EM at em_throughput elements/cycle;
//   * the token dropper sorts scores with a bitonic network padded to a
//     power of two and then shuffles/fuses token rows through the EM.
//
// Stages run back to back with no overlap, so report totals are the sums of
// the per-stage counts.

struct HardwareConfig {
  std::size_t chms = 4;       // parallel computing head modules
  std::size_t pe_rows = 12;   // PE rows per CHM (token dimension)
  std::size_t pe_cols = 2;    // PE columns per CHM (weight column dimension)
  std::size_t pe_lanes = 8;   // multiplier lanes per block dimension in a PE
  std::size_t block = 16;     // block size the buffers are dimensioned for
  std::size_t buffer_depth = 24;   // row blocks buffered per output block
  double dsp_per_unit = 1.1537;    // DSPs per multiplier unit
  double lut_per_unit = 129.88;    // LUTs per multiplier unit
  std::size_t em_throughput = 64;  // element-wise module, elements/cycle
  std::size_t sorter_width = 16;   // compare-exchange lanes in the sorter
  double clock_hz = 300.0e6;
  bool lpt_balance = true;  // offline longest-processing-time balancing

  void validate() const {
    if (chms == 0 || pe_rows == 0 || pe_cols == 0 || pe_lanes == 0 ||
        block == 0 || em_throughput == 0 || sorter_width == 0 ||
        clock_hz <= 0.0)
      throw std::invalid_argument(
          "hardware config: all parallelism parameters must be positive");
  }

  // cycles for one b x b block product
  std::uint64_t block_pair_cycles(std::size_t b) const {
    const std::uint64_t per_dim = (b + pe_lanes - 1) / pe_lanes;
    return per_dim * per_dim * b;
  }
};

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
  return (a + b - 1) / b;
}

// Block-column to PE-column-bin mapping for one weight matrix.
struct ColumnAssignment {
  std::size_t bins = 0;
  std::vector<std::size_t> bin_of;  // per block column
};

inline ColumnAssignment round_robin_columns(std::size_t columns,
                                            std::size_t bins) {
  ColumnAssignment a;
  a.bins = bins;
  a.bin_of.resize(columns);
  for (std::size_t c = 0; c < columns; ++c) a.bin_of[c] = c % bins;
  return a;
}

// Longest-processing-time greedy: heaviest column first into the currently
// lightest bin; ties go to the smaller column/bin index.
inline ColumnAssignment balance_columns(const ColumnProfile& profile,
                                        std::size_t bins) {
  if (bins == 0)
    throw std::invalid_argument("balance_columns: need at least one bin");
  ColumnAssignment a;
  a.bins = bins;
  a.bin_of.resize(profile.counts.size());
  std::vector<std::size_t> order(profile.counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) {
                     if (profile.counts[l] != profile.counts[r])
                       return profile.counts[l] > profile.counts[r];
                     return l < r;
                   });
  std::vector<std::uint64_t> load(bins, 0);
  for (auto c : order) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < bins; ++b)
      if (load[b] < load[best]) best = b;
    a.bin_of[c] = best;
    load[best] += profile.counts[c];
  }
  return a;
}

namespace detail {

struct ChunkCost {
  std::uint64_t cycles = 0;
  std::uint64_t busy = 0;  // PE-cycles spent on real blocks
  double max_over_mean_load = 1.0;
};

// One chunk on one CHM: each PE-column bin drains its own block queue
// (column order, pe_rows blocks per wave, a wave costs its most expensive
// block) and the chunk takes as long as its slowest bin.
inline ChunkCost schedule_chunk(std::span<const std::uint64_t> column_loads,
                                std::span<const std::size_t> bin_of,
                                std::size_t bins, std::size_t row_blocks,
                                std::size_t pe_rows,
                                std::uint64_t unit_cycles) {
  std::vector<std::vector<std::uint64_t>> queue(bins);
  std::uint64_t total_load = 0, max_load = 0;
  std::vector<std::uint64_t> bin_load(bins, 0);
  for (std::size_t c = 0; c < column_loads.size(); ++c) {
    if (column_loads[c] == 0) continue;
    const std::uint64_t cost = column_loads[c] * unit_cycles;
    auto& q = queue[bin_of[c]];
    q.insert(q.end(), row_blocks, cost);
    bin_load[bin_of[c]] += column_loads[c];
    total_load += column_loads[c];
  }
  for (auto l : bin_load) max_load = std::max(max_load, l);

  ChunkCost out;
  for (const auto& q : queue) {
    std::uint64_t bin_cycles = 0;
    for (std::size_t w = 0; w * pe_rows < q.size(); ++w) {
      std::uint64_t wave_cost = 0;
      const std::size_t to = std::min(q.size(), (w + 1) * pe_rows);
      for (std::size_t i = w * pe_rows; i < to; ++i)
        wave_cost = std::max(wave_cost, q[i]);
      bin_cycles += wave_cost;
    }
    out.cycles = std::max(out.cycles, bin_cycles);
    for (auto c : q) out.busy += c;
  }
  if (total_load > 0)
    out.max_over_mean_load = static_cast<double>(max_load) * double(bins) /
                             static_cast<double>(total_load);
  return out;
}

struct MpcaCost {
  std::uint64_t cycles = 0;
  std::uint64_t busy = 0;
  std::vector<std::uint64_t> chm_busy;
  double max_over_mean_load = 1.0;
};

struct ChunkSpec {
  std::vector<std::uint64_t> loads;    // per column of the chunk
  std::vector<std::size_t> bin_of;     // same length
};

// Chunks are issued to the CHMs in groups of `chms`; a group takes as long
// as its slowest member.
inline MpcaCost schedule_chunks(std::span<const ChunkSpec> chunks,
                                const HardwareConfig& hw,
                                std::size_t row_blocks,
                                std::uint64_t unit_cycles) {
  MpcaCost out;
  out.chm_busy.assign(hw.chms, 0);
  for (std::size_t g = 0; g < chunks.size(); g += hw.chms) {
    std::uint64_t group_cycles = 0;
    for (std::size_t j = 0; j < hw.chms && g + j < chunks.size(); ++j) {
      const auto& ch = chunks[g + j];
      auto cost = schedule_chunk(ch.loads, ch.bin_of, hw.pe_cols, row_blocks,
                                 hw.pe_rows, unit_cycles);
      group_cycles = std::max(group_cycles, cost.cycles);
      out.busy += cost.busy;
      out.chm_busy[j] += cost.busy;
      out.max_over_mean_load =
          std::max(out.max_over_mean_load, cost.max_over_mean_load);
    }
    out.cycles += group_cycles;
  }
  return out;
}

inline std::vector<std::size_t> chunk_bins(std::span<const std::uint64_t> loads,
                                           std::size_t bins, bool lpt) {
  if (!lpt) {
    std::vector<std::size_t> bin_of(loads.size());
    for (std::size_t c = 0; c < loads.size(); ++c) bin_of[c] = c % bins;
    return bin_of;
  }
  ColumnProfile p;
  p.counts.assign(loads.begin(), loads.end());
  p.total_block_rows = 0;  // unused by the balancer
  return balance_columns(p, bins).bin_of;
}

inline std::uint64_t em_pass(std::uint64_t elements,
                             const HardwareConfig& hw) {
  return ceil_div(elements, hw.em_throughput);
}

}  // namespace detail

struct KernelSim {
  BlockDenseMatrix output;
  std::uint64_t cycles = 0;
  std::uint64_t busy = 0;
  std::uint64_t macs = 0;
  std::vector<std::uint64_t> chm_busy;
  double max_over_mean_load = 1.0;
};

// Sparse block-wise matmul on the array. `chunk_width` is the output width
// one CHM owns per iteration (the per-head width in the encoder). The
// optional assignment overrides the built-in column balancing and must map
// every block column of `w` to a bin.
inline KernelSim simulate_sbmm(const BlockDenseMatrix& x,
                               const BlockSparseMatrix& w,
                               std::size_t chunk_width,
                               const HardwareConfig& hw,
                               const ColumnAssignment* assignment = nullptr) {
  hw.validate();
  if (x.cols() != w.rows() || x.block_size() != w.block_size())
    throw std::invalid_argument(
        "simulate_sbmm: dimension or block-size mismatch");
  if (chunk_width == 0)
    throw std::invalid_argument("simulate_sbmm: chunk width must be positive");
  if (assignment && (assignment->bin_of.size() != w.block_cols() ||
                     assignment->bins != hw.pe_cols))
    throw std::invalid_argument(
        "simulate_sbmm: assignment does not cover the weight columns");

  const std::size_t b = x.block_size();
  const std::size_t chunk_blocks = (chunk_width + b - 1) / b;
  const std::uint64_t unit = hw.block_pair_cycles(b);

  std::vector<detail::ChunkSpec> chunks;
  for (std::size_t c0 = 0; c0 < w.block_cols(); c0 += chunk_blocks) {
    const std::size_t c1 = std::min(w.block_cols(), c0 + chunk_blocks);
    detail::ChunkSpec spec;
    std::uint64_t total = 0;
    for (std::size_t c = c0; c < c1; ++c) {
      spec.loads.push_back(w.column(c).header.size());
      total += spec.loads.back();
    }
    if (total == 0) continue;  // nothing stored for this chunk
    if (assignment) {
      for (std::size_t c = c0; c < c1; ++c)
        spec.bin_of.push_back(assignment->bin_of[c]);
    } else {
      spec.bin_of = detail::chunk_bins(spec.loads, hw.pe_cols,
                                       hw.lpt_balance);
    }
    chunks.push_back(std::move(spec));
  }

  auto cost = detail::schedule_chunks(chunks, hw, x.block_rows(), unit);
  KernelSim sim;
  sim.output = sbmm_ref(x, w);
  sim.cycles = cost.cycles;
  sim.busy = cost.busy;
  sim.chm_busy = std::move(cost.chm_busy);
  sim.max_over_mean_load = cost.max_over_mean_load;
  sim.macs = static_cast<std::uint64_t>(x.rows()) * b * b *
             w.present_blocks();
  return sim;
}

// Dense block-wise matmul: every block present, round-robin columns.
inline KernelSim simulate_dbmm(const BlockDenseMatrix& x,
                               const BlockDenseMatrix& w,
                               std::size_t chunk_width,
                               const HardwareConfig& hw) {
  hw.validate();
  if (x.cols() != w.rows() || x.block_size() != w.block_size())
    throw std::invalid_argument(
        "simulate_dbmm: dimension or block-size mismatch");
  const std::size_t b = x.block_size();
  const std::size_t chunk_blocks = (chunk_width + b - 1) / b;
  const std::uint64_t unit = hw.block_pair_cycles(b);

  std::vector<detail::ChunkSpec> chunks;
  for (std::size_t c0 = 0; c0 < w.block_cols(); c0 += chunk_blocks) {
    const std::size_t c1 = std::min(w.block_cols(), c0 + chunk_blocks);
    detail::ChunkSpec spec;
    spec.loads.assign(c1 - c0, w.block_rows());
    spec.bin_of = detail::chunk_bins(spec.loads, hw.pe_cols, false);
    chunks.push_back(std::move(spec));
  }
  auto cost = detail::schedule_chunks(chunks, hw, x.block_rows(), unit);
  KernelSim sim;
  sim.output = dbmm_ref(x, w);
  sim.cycles = cost.cycles;
  sim.busy = cost.busy;
  sim.chm_busy = std::move(cost.chm_busy);
  sim.max_over_mean_load = cost.max_over_mean_load;
  sim.macs = static_cast<std::uint64_t>(x.rows()) * w.rows() * w.cols();
  return sim;
}

struct HeadKernelSim {
  std::vector<BlockDenseMatrix> outputs;
  std::uint64_t cycles = 0;
  std::uint64_t busy = 0;
  std::uint64_t macs = 0;
  std::vector<std::uint64_t> chm_busy;
};

// Head-wise dense matmul: head h's product runs on one CHM, all blocks
// present.
inline HeadKernelSim simulate_dhbmm(std::span<const BlockDenseMatrix> lhs,
                                    std::span<const BlockDenseMatrix> rhs,
                                    const HardwareConfig& hw) {
  hw.validate();
  if (lhs.size() != rhs.size() || lhs.empty())
    throw std::invalid_argument("simulate_dhbmm: head count mismatch");
  const std::size_t b = lhs.front().block_size();
  const std::uint64_t unit = hw.block_pair_cycles(b);

  std::vector<detail::ChunkSpec> chunks;
  HeadKernelSim sim;
  for (std::size_t h = 0; h < lhs.size(); ++h) {
    if (lhs[h].cols() != rhs[h].rows() || lhs[h].block_size() != b ||
        rhs[h].block_size() != b)
      throw std::invalid_argument(
          "simulate_dhbmm: per-head dimension mismatch");
    detail::ChunkSpec spec;
    spec.loads.assign(rhs[h].block_cols(), rhs[h].block_rows());
    spec.bin_of = detail::chunk_bins(spec.loads, hw.pe_cols, false);
    chunks.push_back(std::move(spec));
    sim.outputs.push_back(dbmm_ref(lhs[h], rhs[h]));
    sim.macs += static_cast<std::uint64_t>(lhs[h].rows()) * rhs[h].rows() *
                rhs[h].cols();
  }
  // all heads share the row-block count of the first operand
  auto cost = detail::schedule_chunks(chunks, hw, lhs.front().block_rows(),
                                      unit);
  sim.cycles = cost.cycles;
  sim.busy = cost.busy;
  sim.chm_busy = std::move(cost.chm_busy);
  return sim;
}

struct TdhmCycles {
  std::uint64_t sort = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t fusion = 0;
  std::uint64_t total() const { return sort + shuffle + fusion; }
};

inline TdhmCycles tdhm_cycles(std::size_t tokens, std::size_t dim,
                              std::size_t dropped, const HardwareConfig& hw) {
  TdhmCycles c;
  const std::uint64_t padded = std::bit_ceil(tokens);
  const std::uint64_t lg = std::bit_width(padded) - 1;
  const std::uint64_t stages = lg * (lg + 1) / 2;
  c.sort = stages * ceil_div(padded / 2, hw.sorter_width);
  c.shuffle = detail::em_pass(static_cast<std::uint64_t>(tokens) * dim, hw);
  c.fusion = detail::em_pass(static_cast<std::uint64_t>(dropped) * dim, hw);
  return c;
}

struct TdhmSim {
  BlockDenseMatrix output;
  TokenRouting routing;
  TdhmCycles cycles;
};

// Token dropper: functionally identical to select_and_fuse; the cycle model
// covers the bitonic sort, the index shuffle, and the fusion stream.
inline TdhmSim simulate_tdhm(const BlockDenseMatrix& z,
                             std::span<const double> scores, double keep_rate,
                             const HardwareConfig& hw) {
  hw.validate();
  auto [out, routing] = select_and_fuse(z, scores, keep_rate);
  TdhmSim sim;
  const std::size_t dropped = z.rows() - (routing.identity()
                                              ? z.rows()
                                              : routing.kept_count);
  sim.cycles = tdhm_cycles(z.rows(), z.cols(),
                           routing.identity() ? 0 : dropped, hw);
  if (routing.identity()) sim.cycles.fusion = 0;
  sim.output = std::move(out);
  sim.routing = std::move(routing);
  return sim;
}

// ---------------------------------------------------------------------------
// Whole-encoder simulation

struct StageCycles {
  std::uint64_t layernorm = 0;
  std::uint64_t qkv = 0;
  std::uint64_t attn_scores = 0;  // QK^T plus the row-sum pass
  std::uint64_t softmax = 0;      // EM exp + normalize streams
  std::uint64_t attn_values = 0;
  std::uint64_t projection = 0;
  std::uint64_t token_drop = 0;
  std::uint64_t mlp = 0;
  std::uint64_t activation = 0;  // GELU stream
  std::uint64_t residual = 0;

  std::uint64_t total() const {
    return layernorm + qkv + attn_scores + softmax + attn_values +
           projection + token_drop + mlp + activation + residual;
  }
  std::uint64_t compute() const {  // MPCA stages only
    return qkv + attn_scores + attn_values + projection + mlp;
  }
  StageCycles& operator+=(const StageCycles& o) {
    layernorm += o.layernorm;
    qkv += o.qkv;
    attn_scores += o.attn_scores;
    softmax += o.softmax;
    attn_values += o.attn_values;
    projection += o.projection;
    token_drop += o.token_drop;
    mlp += o.mlp;
    activation += o.activation;
    residual += o.residual;
    return *this;
  }
};

struct MacCounts {
  std::uint64_t layernorm = 0;
  std::uint64_t residual = 0;
  std::uint64_t qkv = 0;
  std::uint64_t attention = 0;  // QK^T and AV, retained heads
  std::uint64_t projection = 0;
  std::uint64_t token_drop = 0;
  std::uint64_t mlp = 0;

  std::uint64_t total() const {
    return layernorm + residual + qkv + attention + projection + token_drop +
           mlp;
  }
  MacCounts& operator+=(const MacCounts& o) {
    layernorm += o.layernorm;
    residual += o.residual;
    qkv += o.qkv;
    attention += o.attention;
    projection += o.projection;
    token_drop += o.token_drop;
    mlp += o.mlp;
    return *this;
  }
};

struct EncoderSim {
  BlockDenseMatrix output;
  StageCycles stages;
  MacCounts macs;
  std::uint64_t busy = 0;  // PE-cycles on real blocks, MPCA stages
  std::vector<std::uint64_t> chm_busy;
  double max_over_mean_load = 1.0;
  std::size_t tokens_in = 0, tokens_out = 0, heads_kept = 0;
  bool tdm_ran = false;
  TokenRouting routing;
};

namespace detail {

inline void merge_kernel(EncoderSim& enc, const KernelSim& k,
                         std::uint64_t StageCycles::*stage) {
  enc.stages.*stage += k.cycles;
  enc.busy += k.busy;
  for (std::size_t j = 0; j < k.chm_busy.size(); ++j)
    enc.chm_busy[j] += k.chm_busy[j];
  enc.max_over_mean_load =
      std::max(enc.max_over_mean_load, k.max_over_mean_load);
}

}  // namespace detail

// Runs one encoder through the array. The functional result is computed
// with the reference kernels (same call sequence as encoder_forward); the
// stage table follows the four-stage MSA pipeline, the EM streams, the
// optional token dropper and the two MLP matmuls.
inline EncoderSim simulate_encoder(const BlockDenseMatrix& z,
                                   const EncoderWeights& w,
                                   const ModelConfig& cfg,
                                   const HardwareConfig& hw, bool token_drop,
                                   double keep_rate) {
  hw.validate();
  const std::size_t b = cfg.block;
  const std::size_t n = z.rows();
  const std::size_t head_blocks = cfg.head_dim / b;
  const std::uint64_t unit = hw.block_pair_cycles(b);
  const std::size_t heads_kept = w.heads_kept();

  EncoderSim enc;
  enc.tokens_in = n;
  enc.heads_kept = heads_kept;
  enc.chm_busy.assign(hw.chms, 0);

  // --- MSA ---------------------------------------------------------------
  BlockDenseMatrix x = layernorm(z, w.ln1_gain, w.ln1_bias);
  enc.stages.layernorm += detail::em_pass(std::uint64_t(n) * cfg.dim, hw);
  enc.macs.layernorm += std::uint64_t(n) * cfg.dim;

  // stage (i): one pass over the concatenated [Wq Wk Wv] chunks
  auto q = simulate_sbmm(x, w.wq, cfg.head_dim, hw);
  auto kk = simulate_sbmm(x, w.wk, cfg.head_dim, hw);
  auto v = simulate_sbmm(x, w.wv, cfg.head_dim, hw);
  // the three matrices form a single chunk stream; regroup their chunk
  // iterations jointly so a partially filled CHM group can take chunks from
  // the next matrix
  {
    // rebuild jointly to honor the concatenated-weight schedule
    std::vector<detail::ChunkSpec> chunks;
    for (const BlockSparseMatrix* wm : {&w.wq, &w.wk, &w.wv}) {
      for (std::size_t c0 = 0; c0 < wm->block_cols(); c0 += head_blocks) {
        const std::size_t c1 = std::min(wm->block_cols(), c0 + head_blocks);
        detail::ChunkSpec spec;
        std::uint64_t total = 0;
        for (std::size_t c = c0; c < c1; ++c) {
          spec.loads.push_back(wm->column(c).header.size());
          total += spec.loads.back();
        }
        if (total == 0) continue;
        spec.bin_of =
            detail::chunk_bins(spec.loads, hw.pe_cols, hw.lpt_balance);
        chunks.push_back(std::move(spec));
      }
    }
    auto cost = detail::schedule_chunks(chunks, hw, x.block_rows(), unit);
    enc.stages.qkv += cost.cycles;
    enc.busy += cost.busy;
    for (std::size_t j = 0; j < cost.chm_busy.size(); ++j)
      enc.chm_busy[j] += cost.chm_busy[j];
    enc.max_over_mean_load =
        std::max(enc.max_over_mean_load, cost.max_over_mean_load);
  }
  enc.macs.qkv += q.macs + kk.macs + v.macs;

  detail::add_row_vector(q.output, w.bq);
  detail::add_row_vector(kk.output, w.bk);
  detail::add_row_vector(v.output, w.bv);

  // stages (ii)/(iii): per retained head
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  std::vector<BlockDenseMatrix> qh, kht, attn, vh;
  std::vector<std::size_t> head_ids;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    if (h < w.head_removed.size() && w.head_removed[h]) continue;
    head_ids.push_back(h);
    qh.push_back(slice_block_cols(q.output, h * head_blocks, head_blocks));
    kht.push_back(transpose(
        slice_block_cols(kk.output, h * head_blocks, head_blocks)));
    vh.push_back(slice_block_cols(v.output, h * head_blocks, head_blocks));
  }

  BlockDenseMatrix concat(n, cfg.qkv_cols(), b);
  if (!head_ids.empty()) {
    auto scores = simulate_dhbmm(qh, kht, hw);
    enc.stages.attn_scores += scores.cycles;
    enc.busy += scores.busy;
    for (std::size_t j = 0; j < scores.chm_busy.size(); ++j)
      enc.chm_busy[j] += scores.chm_busy[j];
    enc.macs.attention += scores.macs;

    // EM: scaling+exponentiation stream over the score matrices
    enc.stages.softmax +=
        detail::em_pass(std::uint64_t(head_ids.size()) * n * n, hw);
    // row-sum pass on the array: per head an (N x N) x (N x b) reduction
    {
      std::vector<detail::ChunkSpec> chunks(head_ids.size());
      for (auto& spec : chunks) {
        spec.loads.assign(1, (n + b - 1) / b);
        spec.bin_of = detail::chunk_bins(spec.loads, hw.pe_cols, false);
      }
      auto cost = detail::schedule_chunks(chunks, hw, (n + b - 1) / b, unit);
      enc.stages.attn_scores += cost.cycles;
      enc.busy += cost.busy;
      for (std::size_t j = 0; j < cost.chm_busy.size(); ++j)
        enc.chm_busy[j] += cost.chm_busy[j];
    }
    // EM: normalization stream
    enc.stages.softmax +=
        detail::em_pass(std::uint64_t(head_ids.size()) * n * n, hw);

    for (auto& s : scores.outputs) detail::scale_softmax_rows(s, inv_scale);
    attn = std::move(scores.outputs);

    auto sa = simulate_dhbmm(attn, vh, hw);
    enc.stages.attn_values += sa.cycles;
    enc.busy += sa.busy;
    for (std::size_t j = 0; j < sa.chm_busy.size(); ++j)
      enc.chm_busy[j] += sa.chm_busy[j];
    enc.macs.attention += sa.macs;

    for (std::size_t t = 0; t < head_ids.size(); ++t)
      paste_block_cols(concat, sa.outputs[t], head_ids[t] * head_blocks);
  }

  // stage (iv): projection
  auto proj = simulate_sbmm(concat, w.wproj, cfg.head_dim, hw);
  detail::merge_kernel(enc, proj, &StageCycles::projection);
  enc.macs.projection += proj.macs;
  detail::add_row_vector(proj.output, w.bproj);

  BlockDenseMatrix tokens = detail::add(proj.output, z);
  enc.stages.residual += detail::em_pass(std::uint64_t(n) * cfg.dim, hw);
  enc.macs.residual += std::uint64_t(n) * cfg.dim;

  // --- optional token dropper ---------------------------------------------
  const std::size_t body = n - 1;
  const std::size_t keep = static_cast<std::size_t>(
      std::ceil(keep_rate * static_cast<double>(body)));
  if (token_drop && keep < body) {
    auto importance = importance_scores(attn);
    // score aggregation streams the class rows of the retained heads
    enc.stages.token_drop +=
        detail::em_pass(std::uint64_t(head_ids.size()) * n, hw);
    auto tdhm = simulate_tdhm(tokens, importance, keep_rate, hw);
    enc.stages.token_drop += tdhm.cycles.total();
    enc.macs.token_drop +=
        std::uint64_t(n) * (head_ids.size() + n + cfg.dim);
    tokens = std::move(tdhm.output);
    enc.routing = std::move(tdhm.routing);
    enc.tdm_ran = true;
  } else if (token_drop) {
    enc.routing.kept_count = n;
    enc.routing.entries.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      enc.routing.entries[i] = {i, i, true};
  }

  const std::size_t n_out = tokens.rows();
  enc.tokens_out = n_out;

  // --- MLP -----------------------------------------------------------------
  BlockDenseMatrix x2 = layernorm(tokens, w.ln2_gain, w.ln2_bias);
  enc.stages.layernorm += detail::em_pass(std::uint64_t(n_out) * cfg.dim, hw);
  enc.macs.layernorm += std::uint64_t(n_out) * cfg.dim;

  auto hidden = simulate_dbmm(x2, w.w_inter, cfg.head_dim, hw);
  detail::merge_kernel(enc, hidden, &StageCycles::mlp);
  enc.macs.mlp += hidden.macs;
  detail::add_row_vector(hidden.output, w.b_inter);
  enc.stages.activation +=
      detail::em_pass(std::uint64_t(n_out) * w.mlp_kept, hw);
  for (std::size_t r = 0; r < hidden.output.rows(); ++r)
    for (std::size_t c = 0; c < hidden.output.cols(); ++c)
      hidden.output.at(r, c) = detail::gelu(hidden.output.at(r, c));

  auto mlp_out = simulate_dbmm(hidden.output, w.w_out, cfg.head_dim, hw);
  detail::merge_kernel(enc, mlp_out, &StageCycles::mlp);
  enc.macs.mlp += mlp_out.macs;
  detail::add_row_vector(mlp_out.output, w.b_out);

  enc.output = detail::add(mlp_out.output, tokens);
  enc.stages.residual += detail::em_pass(std::uint64_t(n_out) * cfg.dim, hw);
  enc.macs.residual += std::uint64_t(n_out) * cfg.dim;
  return enc;
}

struct SimReport {
  std::vector<EncoderSim> encoders;
  StageCycles stages;
  MacCounts macs;
  std::uint64_t total_cycles = 0;
  std::uint64_t compute_cycles = 0;
  std::uint64_t busy = 0;
  double utilization = 1.0;
  std::vector<std::uint64_t> chm_busy;
  double max_over_mean_load = 1.0;
  std::vector<std::size_t> token_counts;
  std::vector<double> logits;

  double latency_ms(const HardwareConfig& hw) const {
    return static_cast<double>(total_cycles) / hw.clock_hz * 1e3;
  }
};

// Busy PE-cycles over the capacity of the MPCA compute stages.
inline double utilization(const SimReport& report, const HardwareConfig& hw) {
  const double capacity =
      static_cast<double>(report.compute_cycles) *
      static_cast<double>(hw.chms * hw.pe_rows * hw.pe_cols);
  return capacity == 0.0 ? 1.0 : static_cast<double>(report.busy) / capacity;
}

// Full encoder stack on the array. The embedding and classifier run on the
// host, exactly as in the reference; only encoder work is cycle-counted.
inline SimReport simulate_model(std::span<const double> image,
                                const ModelWeights& m, const ModelConfig& cfg,
                                const HardwareConfig& hw) {
  cfg.validate();
  hw.validate();
  if (m.encoders.size() != cfg.layers)
    throw std::invalid_argument("simulate_model: encoder count mismatch");
  auto tdm = tdm_layer_set(cfg.tdm_layers, cfg.layers);

  SimReport report;
  report.chm_busy.assign(hw.chms, 0);
  BlockDenseMatrix z = embed(image, m, cfg);
  report.token_counts.push_back(z.rows());
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    const bool drop = std::find(tdm.begin(), tdm.end(), l) != tdm.end();
    auto enc = simulate_encoder(z, m.encoders[l - 1], cfg, hw, drop,
                                cfg.token_keep_rate);
    z = enc.output;
    report.token_counts.push_back(z.rows());
    report.stages += enc.stages;
    report.macs += enc.macs;
    report.busy += enc.busy;
    for (std::size_t j = 0; j < hw.chms; ++j)
      report.chm_busy[j] += enc.chm_busy[j];
    report.max_over_mean_load =
        std::max(report.max_over_mean_load, enc.max_over_mean_load);
    enc.output = BlockDenseMatrix();  // drop the copy held by the record
    report.encoders.push_back(std::move(enc));
  }
  report.total_cycles = report.stages.total();
  report.compute_cycles = report.stages.compute();
  report.utilization = utilization(report, hw);
  report.logits = classifier_logits(z, m, cfg);
  return report;
}

}  // namespace vitsim
