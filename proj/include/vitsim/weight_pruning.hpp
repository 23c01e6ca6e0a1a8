#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "vitsim/block_matrix.hpp"
#include "vitsim/model.hpp"

namespace vitsim {

// Static block-weight pruning: score-driven top-k masks, the alternate
// head pattern for the attention weights, neuron pruning for the MLP, the
// cubic density schedule and the fine-pruning loss terms.

using PruneMask = BlockMask;

// One importance score per b x b weight block.
struct ScoreGrid {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;  // row-major

  ScoreGrid() = default;
  ScoreGrid(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double at(std::size_t i, std::size_t j) const {
    return values[i * cols + j];
  }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

// Scores for one encoder: block grids for the attention weights and one
// score per MLP neuron (shared by the intermediate columns and output rows,
// which is what keeps the two compacted consistently).
struct EncoderScores {
  ScoreGrid wq, wk, wv, wproj;
  std::vector<double> mlp;
};

struct PruneLossParams {
  double lambda = 0.0;          // sparsity penalty weight
  double lambda_distill = 0.5;  // mixing weight of the distillation loss
  double lambda_normal = 0.5;   // mixing weight of the task loss
  double temperature = 1.0;
};

// Density ramp: full density until warmup_steps, cubic descent over
// ramp_steps, then flat at final_density.
struct SparsitySchedule {
  double initial_density = 1.0;
  double final_density = 0.5;
  std::size_t warmup_steps = 0;
  std::size_t ramp_steps = 1;
  std::size_t total_steps = 1;

  void validate() const {
    if (!(final_density > 0.0 && final_density <= initial_density &&
          initial_density <= 1.0))
      throw std::invalid_argument(
          "schedule: need 0 < final <= initial <= 1 density");
    if (warmup_steps + ramp_steps > total_steps)
      throw std::invalid_argument(
          "schedule: warmup + ramp must fit in total steps");
  }
};

inline std::size_t topk_count(double keep_rate, std::size_t total) {
  return static_cast<std::size_t>(
      std::ceil(keep_rate * static_cast<double>(total)));
}

// Keep the k = ceil(keep_rate * m * n) highest-scoring blocks. Ties go to
// the smaller (row, col) index so masks are reproducible.
inline PruneMask generate_mask(const ScoreGrid& scores, double keep_rate) {
  if (scores.rows == 0 || scores.cols == 0 || scores.values.empty())
    throw std::invalid_argument("generate_mask: empty score grid");
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw std::invalid_argument("generate_mask: keep rate must be in (0, 1]");
  const std::size_t total = scores.rows * scores.cols;
  const std::size_t k = topk_count(keep_rate, total);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (scores.values[a] != scores.values[b])
                       return scores.values[a] > scores.values[b];
                     return a < b;
                   });
  PruneMask mask(scores.rows, scores.cols, 0);
  for (std::size_t i = 0; i < k; ++i) mask.keep[order[i]] = 1;
  return mask;
}

// Same selection over a neuron score vector.
inline std::vector<std::uint8_t> generate_neuron_mask(
    std::span<const double> scores, double keep_rate) {
  if (scores.empty())
    throw std::invalid_argument("generate_neuron_mask: empty score vector");
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw std::invalid_argument(
        "generate_neuron_mask: keep rate must be in (0, 1]");
  const std::size_t k = topk_count(keep_rate, scores.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (scores[a] != scores[b]) return scores[a] > scores[b];
                     return a < b;
                   });
  std::vector<std::uint8_t> mask(scores.size(), 0);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1;
  return mask;
}

struct AlternatePatternResult {
  PruneMask qkv_mask;   // D x H*D' block grid with removed heads zeroed
  PruneMask proj_mask;  // H*D' x D block grid with removed heads zeroed
  std::vector<std::size_t> removed_heads;
};

namespace detail {

inline bool head_cols_all_zero(const PruneMask& m, std::size_t head,
                               std::size_t head_blocks) {
  for (std::size_t j = head * head_blocks; j < (head + 1) * head_blocks; ++j)
    for (std::size_t i = 0; i < m.grid_rows; ++i)
      if (m.at(i, j)) return false;
  return true;
}

inline bool head_rows_all_zero(const PruneMask& m, std::size_t head,
                               std::size_t head_blocks) {
  for (std::size_t i = head * head_blocks; i < (head + 1) * head_blocks; ++i)
    for (std::size_t j = 0; j < m.grid_cols; ++j)
      if (m.at(i, j)) return false;
  return true;
}

inline void zero_head_cols(PruneMask& m, std::size_t head,
                           std::size_t head_blocks) {
  for (std::size_t j = head * head_blocks; j < (head + 1) * head_blocks; ++j)
    for (std::size_t i = 0; i < m.grid_rows; ++i) m.at(i, j) = 0;
}

inline void zero_head_rows(PruneMask& m, std::size_t head,
                           std::size_t head_blocks) {
  for (std::size_t i = head * head_blocks; i < (head + 1) * head_blocks; ++i)
    for (std::size_t j = 0; j < m.grid_cols; ++j) m.at(i, j) = 0;
}

}  // namespace detail

// A head whose block-columns vanish from the QKV-side mask or whose
// block-rows vanish from the projection mask is dead weight on the other
// side as well; both are cleared and the head is reported removed.
// `head_blocks` is head_dim / block.
inline AlternatePatternResult apply_alternate_pattern(const PruneMask& qkv,
                                                      const PruneMask& proj,
                                                      std::size_t heads,
                                                      std::size_t head_blocks) {
  if (heads == 0 || head_blocks == 0)
    throw std::invalid_argument("alternate pattern: empty head layout");
  if (qkv.grid_cols != heads * head_blocks ||
      proj.grid_rows != heads * head_blocks ||
      qkv.grid_rows != proj.grid_cols)
    throw std::invalid_argument(
        "alternate pattern: mask grids do not match the head layout");
  AlternatePatternResult out{qkv, proj, {}};
  for (std::size_t h = 0; h < heads; ++h) {
    const bool gone = detail::head_cols_all_zero(qkv, h, head_blocks) ||
                      detail::head_rows_all_zero(proj, h, head_blocks);
    if (!gone) continue;
    detail::zero_head_cols(out.qkv_mask, h, head_blocks);
    detail::zero_head_rows(out.proj_mask, h, head_blocks);
    out.removed_heads.push_back(h);
  }
  return out;
}

inline double head_retained_ratio(std::span<const std::size_t> removed_per_encoder,
                                  std::size_t heads) {
  if (heads == 0 || removed_per_encoder.empty()) return 1.0;
  std::size_t removed = 0;
  for (auto r : removed_per_encoder) removed += r;
  const std::size_t total = heads * removed_per_encoder.size();
  return static_cast<double>(total - removed) / static_cast<double>(total);
}

// Cubic density ramp used to anneal the keep rate during fine-pruning.
inline double cubic_density(std::size_t step, const SparsitySchedule& s) {
  s.validate();
  if (step <= s.warmup_steps) return s.initial_density;
  if (step >= s.warmup_steps + s.ramp_steps) return s.final_density;
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.ramp_steps);
  const double rest = 1.0 - progress;
  return s.final_density +
         (s.initial_density - s.final_density) * rest * rest * rest;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// lambda * sum of sigmoid over every score entry.
inline double sparsity_penalty(std::span<const std::span<const double>> scores,
                               double lambda) {
  if (lambda < 0.0)
    throw std::invalid_argument("sparsity penalty: lambda must be >= 0");
  double total = 0.0;
  for (const auto& block : scores)
    for (double s : block) total += sigmoid(s);
  return lambda * total;
}

inline double sparsity_penalty(std::span<const double> scores, double lambda) {
  const std::span<const double> one[] = {scores};
  return sparsity_penalty(std::span<const std::span<const double>>(one, 1),
                          lambda);
}

namespace detail {

inline std::vector<double> log_softmax_scaled(std::span<const double> logits,
                                              double temperature) {
  std::vector<double> out(logits.size());
  double mx = logits[0] / temperature;
  for (double v : logits) mx = std::max(mx, v / temperature);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] / temperature - mx;
    sum += std::exp(out[i]);
  }
  const double log_sum = std::log(sum);
  for (auto& v : out) v -= log_sum;
  return out;
}

}  // namespace detail

// T^2 * KL(teacher(T) || student(T)) over temperature-softened softmaxes.
inline double distill_loss(std::span<const double> teacher_logits,
                           std::span<const double> student_logits,
                           double temperature) {
  if (teacher_logits.size() != student_logits.size() || teacher_logits.empty())
    throw std::invalid_argument("distill loss: logit length mismatch");
  if (!(temperature > 0.0))
    throw std::invalid_argument("distill loss: temperature must be positive");
  const auto lt = detail::log_softmax_scaled(teacher_logits, temperature);
  const auto ls = detail::log_softmax_scaled(student_logits, temperature);
  double kl = 0.0;
  for (std::size_t i = 0; i < lt.size(); ++i)
    kl += std::exp(lt[i]) * (lt[i] - ls[i]);
  return temperature * temperature * kl;
}

inline double combined_loss(double distill, double normal,
                            const PruneLossParams& p) {
  return p.lambda_distill * distill + p.lambda_normal * normal;
}

// Masks travel in the container's sparse layout: the per-column headers list
// the kept block rows and carry unit payloads, so the header alone encodes
// the mask.
inline BlockSparseMatrix mask_to_sparse(const PruneMask& mask) {
  BlockSparseMatrix out(std::max<std::size_t>(mask.grid_rows, 1),
                        std::max<std::size_t>(mask.grid_cols, 1), 1);
  for (std::size_t j = 0; j < mask.grid_cols; ++j) {
    auto& col = out.column(j);
    for (std::size_t i = 0; i < mask.grid_rows; ++i)
      if (mask.at(i, j)) {
        col.header.push_back(static_cast<std::uint32_t>(i));
        col.values.push_back(1.0);
      }
  }
  return out;
}

inline PruneMask sparse_to_mask(const BlockSparseMatrix& s) {
  PruneMask mask(s.block_rows(), s.block_cols(), 0);
  for (std::size_t j = 0; j < s.block_cols(); ++j)
    for (auto i : s.column(j).header) mask.at(i, j) = 1;
  return mask;
}

// One sampled point of the fine-pruning replay: the annealed density, the
// resulting mask population and the sparsity penalty at that step. This is
// the mask-mechanics half of the training loop; gradients and weight updates
// stay out of scope.
struct FinePruneStep {
  std::size_t step = 0;
  double density = 1.0;
  std::size_t mask_ones = 0;    // kept blocks across all score grids
  std::size_t neurons_kept = 0; // kept MLP neurons across encoders
  double penalty = 0.0;
};

inline std::vector<FinePruneStep> replay_fine_pruning(
    const std::vector<EncoderScores>& scores, const SparsitySchedule& sched,
    std::size_t step_stride, double lambda) {
  sched.validate();
  if (step_stride == 0)
    throw std::invalid_argument("replay: step stride must be positive");
  std::vector<FinePruneStep> trace;
  for (std::size_t step = 0; step <= sched.total_steps;
       step += step_stride) {
    FinePruneStep p;
    p.step = step;
    p.density = cubic_density(step, sched);
    double sig = 0.0;
    for (const auto& s : scores) {
      for (const ScoreGrid* g : {&s.wq, &s.wk, &s.wv, &s.wproj}) {
        p.mask_ones += generate_mask(*g, p.density).ones();
        for (double v : g->values) sig += sigmoid(v);
      }
      const auto nm = generate_neuron_mask(s.mlp, p.density);
      for (auto v : nm) p.neurons_kept += v;
      for (double v : s.mlp) sig += sigmoid(v);
    }
    p.penalty = lambda * sig;
    trace.push_back(p);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Whole-model pruning

struct EncoderPruneStats {
  std::vector<std::size_t> removed_heads;
  std::size_t present_qkv = 0;   // blocks kept across Wq, Wk, Wv
  std::size_t present_proj = 0;  // blocks kept in Wproj
  double alpha = 0.0;            // mean retained fraction per QKV column
  double alpha_proj = 0.0;       // same for the projection
  std::size_t mlp_kept = 0;
  std::size_t weight_params = 0;  // stored weight scalars after pruning
};

struct PruneReport {
  std::vector<EncoderPruneStats> encoders;
  double head_retained_ratio = 1.0;
  double alpha = 0.0;       // model-wide means, weighted by columns
  double alpha_proj = 0.0;
  double alpha_mlp = 0.0;
  std::size_t param_count = 0;  // all stored scalars incl. embeddings
};

namespace detail {

inline void check_grid(const ScoreGrid& s, const BlockSparseMatrix& w,
                       const char* what) {
  if (s.rows != w.block_rows() || s.cols != w.block_cols())
    throw std::invalid_argument(std::string("prune_model: score grid for ") +
                                what + " does not match the weight grid");
}

inline void zero_range(std::vector<double>& v, std::size_t begin,
                       std::size_t end) {
  for (std::size_t i = begin; i < end && i < v.size(); ++i) v[i] = 0.0;
}

}  // namespace detail

// Masks the attention weights via top-k block selection plus the alternate
// head pattern (one shared head check across Wq/Wk/Wv and Wproj), and
// physically compacts the MLP to its kept neurons. Expects the input
// encoders in the unpruned (full-header, full-width) form.
inline std::pair<ModelWeights, PruneReport> prune_model(
    const ModelWeights& model, const ModelConfig& config,
    const std::vector<EncoderScores>& scores, double keep_rate) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw std::invalid_argument("prune_model: keep rate must be in (0, 1]");
  if (scores.size() != model.encoders.size())
    throw std::invalid_argument(
        "prune_model: need one score set per encoder");

  const std::size_t head_blocks = config.head_dim / config.block;
  ModelWeights out;
  out.patch_proj = model.patch_proj;
  out.class_token = model.class_token;
  out.pos_embed = model.pos_embed;
  out.final_gain = model.final_gain;
  out.final_bias = model.final_bias;
  out.classifier = model.classifier;
  out.classifier_bias = model.classifier_bias;

  PruneReport report;
  std::vector<std::size_t> removed_counts;
  double alpha_num = 0.0, alpha_den = 0.0;
  double alpha_proj_num = 0.0, alpha_proj_den = 0.0;

  for (std::size_t e = 0; e < model.encoders.size(); ++e) {
    const EncoderWeights& enc = model.encoders[e];
    const EncoderScores& sc = scores[e];
    detail::check_grid(sc.wq, enc.wq, "wq");
    detail::check_grid(sc.wk, enc.wk, "wk");
    detail::check_grid(sc.wv, enc.wv, "wv");
    detail::check_grid(sc.wproj, enc.wproj, "wproj");
    if (enc.mlp_kept != config.mlp_dim || sc.mlp.size() != config.mlp_dim)
      throw std::invalid_argument(
          "prune_model: expects unpruned MLP weights and full neuron scores");

    PruneMask mq = generate_mask(sc.wq, keep_rate);
    PruneMask mk = generate_mask(sc.wk, keep_rate);
    PruneMask mv = generate_mask(sc.wv, keep_rate);
    PruneMask mproj = generate_mask(sc.wproj, keep_rate);

    // Shared head check: a head that is fully masked on any QKV side or on
    // the projection side is removed from all four matrices.
    std::vector<std::size_t> removed;
    for (std::size_t h = 0; h < config.heads; ++h) {
      const bool gone = detail::head_cols_all_zero(mq, h, head_blocks) ||
                        detail::head_cols_all_zero(mk, h, head_blocks) ||
                        detail::head_cols_all_zero(mv, h, head_blocks) ||
                        detail::head_rows_all_zero(mproj, h, head_blocks);
      if (!gone) continue;
      removed.push_back(h);
      detail::zero_head_cols(mq, h, head_blocks);
      detail::zero_head_cols(mk, h, head_blocks);
      detail::zero_head_cols(mv, h, head_blocks);
      detail::zero_head_rows(mproj, h, head_blocks);
    }

    EncoderWeights pe;
    pe.wq = compress(decompress(enc.wq), mq);
    pe.wk = compress(decompress(enc.wk), mk);
    pe.wv = compress(decompress(enc.wv), mv);
    pe.wproj = compress(decompress(enc.wproj), mproj);
    pe.bq = enc.bq;
    pe.bk = enc.bk;
    pe.bv = enc.bv;
    pe.bproj = enc.bproj;
    pe.ln1_gain = enc.ln1_gain;
    pe.ln1_bias = enc.ln1_bias;
    pe.ln2_gain = enc.ln2_gain;
    pe.ln2_bias = enc.ln2_bias;
    pe.head_removed.assign(config.heads, 0);
    for (auto h : removed) {
      pe.head_removed[h] = 1;
      detail::zero_range(pe.bq, h * config.head_dim, (h + 1) * config.head_dim);
      detail::zero_range(pe.bk, h * config.head_dim, (h + 1) * config.head_dim);
      detail::zero_range(pe.bv, h * config.head_dim, (h + 1) * config.head_dim);
    }

    // MLP: drop pruned neurons outright, keeping the original order.
    const auto neuron_mask = generate_neuron_mask(sc.mlp, keep_rate);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < neuron_mask.size(); ++i)
      if (neuron_mask[i]) kept.push_back(i);
    pe.mlp_kept = kept.size();
    pe.w_inter = BlockDenseMatrix(config.dim, kept.size(), config.block);
    pe.w_out = BlockDenseMatrix(kept.size(), config.dim, config.block);
    pe.b_inter.resize(kept.size());
    for (std::size_t t = 0; t < kept.size(); ++t) {
      for (std::size_t r = 0; r < config.dim; ++r)
        pe.w_inter.at(r, t) = enc.w_inter.at(r, kept[t]);
      for (std::size_t c = 0; c < config.dim; ++c)
        pe.w_out.at(t, c) = enc.w_out.at(kept[t], c);
      pe.b_inter[t] = enc.b_inter[kept[t]];
    }
    pe.b_out = enc.b_out;

    EncoderPruneStats st;
    st.removed_heads = removed;
    st.mlp_kept = kept.size();
    const std::size_t kept_heads = config.heads - removed.size();
    const std::size_t qkv_rows = pe.wq.block_rows();
    st.present_qkv = pe.wq.present_blocks() + pe.wk.present_blocks() +
                     pe.wv.present_blocks();
    st.present_proj = pe.wproj.present_blocks();
    const double qkv_cols_kept =
        static_cast<double>(3 * kept_heads * head_blocks);
    st.alpha = qkv_cols_kept == 0.0
                   ? 0.0
                   : static_cast<double>(st.present_qkv) /
                         (qkv_cols_kept * static_cast<double>(qkv_rows));
    const double proj_rows_kept =
        static_cast<double>(kept_heads * head_blocks);
    st.alpha_proj =
        proj_rows_kept == 0.0
            ? 0.0
            : static_cast<double>(st.present_proj) /
                  (static_cast<double>(pe.wproj.block_cols()) * proj_rows_kept);
    const std::size_t bb = config.block * config.block;
    st.weight_params = (st.present_qkv + st.present_proj) * bb +
                       2 * kept.size() * config.dim;
    if (kept_heads > 0) {
      alpha_num += static_cast<double>(st.present_qkv) /
                   static_cast<double>(qkv_rows);
      alpha_den += qkv_cols_kept;
      alpha_proj_num += static_cast<double>(st.present_proj) / proj_rows_kept;
      alpha_proj_den += static_cast<double>(pe.wproj.block_cols());
    }

    removed_counts.push_back(removed.size());
    report.encoders.push_back(std::move(st));
    out.encoders.push_back(std::move(pe));
  }

  report.head_retained_ratio =
      head_retained_ratio(removed_counts, config.heads);
  report.alpha = alpha_den == 0.0 ? 0.0 : alpha_num / alpha_den;
  report.alpha_proj =
      alpha_proj_den == 0.0 ? 0.0 : alpha_proj_num / alpha_proj_den;
  report.alpha_mlp =
      model.encoders.empty()
          ? 1.0
          : static_cast<double>(out.encoders.front().mlp_kept) /
                static_cast<double>(config.mlp_dim);

  std::size_t params = model.patch_proj.rows() * model.patch_proj.cols() +
                       model.class_token.size() +
                       model.pos_embed.rows() * model.pos_embed.cols() +
                       model.final_gain.size() + model.final_bias.size() +
                       model.classifier.rows() * model.classifier.cols() +
                       model.classifier_bias.size();
  for (std::size_t e = 0; e < out.encoders.size(); ++e) {
    const auto& pe = out.encoders[e];
    params += report.encoders[e].weight_params;
    params += pe.bq.size() + pe.bk.size() + pe.bv.size() + pe.bproj.size() +
              pe.b_inter.size() + pe.b_out.size() + pe.ln1_gain.size() +
              pe.ln1_bias.size() + pe.ln2_gain.size() + pe.ln2_bias.size();
  }
  report.param_count = params;
  return {std::move(out), std::move(report)};
}

}  // namespace vitsim
