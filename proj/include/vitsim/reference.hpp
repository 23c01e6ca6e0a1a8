#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "vitsim/block_matrix.hpp"
#include "vitsim/model.hpp"
#include "vitsim/token_pruning.hpp"

namespace vitsim {

// Functional reference inference for the (pruned) encoder stack. Every
// operation walks the true extents in a fixed order, so two runs produce
// bit-identical results; the simulator reuses these routines for its
// numerical path and must match them exactly.

inline constexpr double kLayerNormEpsilon = 1e-6;

inline BlockDenseMatrix layernorm(const BlockDenseMatrix& z,
                                  std::span<const double> gain,
                                  std::span<const double> bias) {
  if (gain.size() != z.cols() || bias.size() != z.cols())
    throw std::invalid_argument("layernorm: gain/bias length mismatch");
  BlockDenseMatrix out(z.rows(), z.cols(), z.block_size());
  const double d = static_cast<double>(z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) mean += z.at(r, c);
    mean /= d;
    double var = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      const double t = z.at(r, c) - mean;
      var += t * t;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (std::size_t c = 0; c < z.cols(); ++c)
      out.at(r, c) = (z.at(r, c) - mean) * inv * gain[c] + bias[c];
  }
  return out;
}

namespace detail {

inline void add_row_vector(BlockDenseMatrix& m, std::span<const double> v) {
  VITSIM_CHECK(v.size() == m.cols(), "row vector length mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) m.at(r, c) += v[c];
}

inline BlockDenseMatrix add(const BlockDenseMatrix& a,
                            const BlockDenseMatrix& b) {
  VITSIM_CHECK(a.rows() == b.rows() && a.cols() == b.cols() &&
                   a.block_size() == b.block_size(),
               "residual operands must have equal shape");
  BlockDenseMatrix out(a.rows(), a.cols(), a.block_size());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      out.at(r, c) = a.at(r, c) + b.at(r, c);
  return out;
}

// Scale by 1/sqrt(head_dim), then a numerically stable row softmax.
// Mirrors the hardware order: one multiplicative scaling pass, an exp pass,
// then normalization by the row sums.
inline void scale_softmax_rows(BlockDenseMatrix& m, double inv_scale) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      m.at(r, c) *= inv_scale;
      mx = std::max(mx, m.at(r, c));
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double e = std::exp(m.at(r, c) - mx);
      m.at(r, c) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < m.cols(); ++c) m.at(r, c) *= inv;
  }
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

}  // namespace detail

struct MsaResult {
  BlockDenseMatrix out;                     // N x D, projection applied
  std::vector<BlockDenseMatrix> attention;  // retained heads, head order
  std::vector<std::size_t> attention_heads; // head index per matrix
};

// Multi-head self-attention over an already layer-normalized input. Removed
// heads are skipped: their value columns and projection rows are all zero,
// so the skipped work contributes nothing to the output.
inline MsaResult msa_forward(const BlockDenseMatrix& x,
                             const EncoderWeights& w,
                             const ModelConfig& cfg) {
  if (x.cols() != cfg.dim)
    throw std::invalid_argument("msa_forward: token width mismatch");
  if (w.wq.rows() != cfg.dim || w.wq.cols() != cfg.qkv_cols() ||
      w.wproj.rows() != cfg.qkv_cols() || w.wproj.cols() != cfg.dim)
    throw std::invalid_argument("msa_forward: weight shape mismatch");

  BlockDenseMatrix q = sbmm_ref(x, w.wq);
  BlockDenseMatrix k = sbmm_ref(x, w.wk);
  BlockDenseMatrix v = sbmm_ref(x, w.wv);
  detail::add_row_vector(q, w.bq);
  detail::add_row_vector(k, w.bk);
  detail::add_row_vector(v, w.bv);

  const std::size_t head_blocks = cfg.head_dim / cfg.block;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

  MsaResult res;
  BlockDenseMatrix concat(x.rows(), cfg.qkv_cols(), cfg.block);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    if (h < w.head_removed.size() && w.head_removed[h]) continue;
    auto qh = slice_block_cols(q, h * head_blocks, head_blocks);
    auto kh = slice_block_cols(k, h * head_blocks, head_blocks);
    auto vh = slice_block_cols(v, h * head_blocks, head_blocks);
    BlockDenseMatrix scores = dbmm_ref(qh, transpose(kh));
    detail::scale_softmax_rows(scores, inv_scale);
    BlockDenseMatrix sa = dbmm_ref(scores, vh);
    paste_block_cols(concat, sa, h * head_blocks);
    res.attention.push_back(std::move(scores));
    res.attention_heads.push_back(h);
  }

  res.out = sbmm_ref(concat, w.wproj);
  detail::add_row_vector(res.out, w.bproj);
  return res;
}

// Two-layer MLP with exact-erf GELU, over an already normalized input.
inline BlockDenseMatrix mlp_forward(const BlockDenseMatrix& x,
                                    const EncoderWeights& w,
                                    const ModelConfig& cfg) {
  if (x.cols() != cfg.dim || w.w_inter.rows() != cfg.dim ||
      w.w_inter.cols() != w.mlp_kept || w.w_out.rows() != w.mlp_kept ||
      w.w_out.cols() != cfg.dim)
    throw std::invalid_argument("mlp_forward: weight shape mismatch");
  BlockDenseMatrix hidden = dbmm_ref(x, w.w_inter);
  detail::add_row_vector(hidden, w.b_inter);
  for (std::size_t r = 0; r < hidden.rows(); ++r)
    for (std::size_t c = 0; c < hidden.cols(); ++c)
      hidden.at(r, c) = detail::gelu(hidden.at(r, c));
  BlockDenseMatrix out = dbmm_ref(hidden, w.w_out);
  detail::add_row_vector(out, w.b_out);
  return out;
}

struct EncoderResult {
  BlockDenseMatrix out;
  bool tdm_applied = false;
  TokenRouting routing;           // meaningful when tdm_applied
  std::vector<double> importance; // scores used for the drop
};

// One encoder: MSA with pre-norm and residual, optional token drop on the
// post-residual tokens, then the MLP with pre-norm and residual against the
// (possibly reduced) token matrix.
inline EncoderResult encoder_forward(const BlockDenseMatrix& z,
                                     const EncoderWeights& w,
                                     const ModelConfig& cfg, bool token_drop,
                                     double keep_rate) {
  EncoderResult res;
  auto msa = msa_forward(layernorm(z, w.ln1_gain, w.ln1_bias), w, cfg);
  BlockDenseMatrix tokens = detail::add(msa.out, z);
  if (token_drop) {
    res.importance = importance_scores(msa.attention);
    auto [reduced, routing] = select_and_fuse(tokens, res.importance,
                                              keep_rate);
    tokens = std::move(reduced);
    res.routing = std::move(routing);
    res.tdm_applied = true;
  }
  auto mlp = mlp_forward(layernorm(tokens, w.ln2_gain, w.ln2_bias), w, cfg);
  res.out = detail::add(mlp, tokens);
  return res;
}

// Patch embedding: flatten P x P x C patches (row-major within the patch,
// channel innermost), project, prepend the class token, add positions.
inline BlockDenseMatrix embed(std::span<const double> image,
                              const ModelWeights& m, const ModelConfig& cfg) {
  if (image.size() != cfg.image_h * cfg.image_w * cfg.channels)
    throw std::invalid_argument("embed: image size mismatch");
  const std::size_t grid_w = cfg.image_w / cfg.patch;
  const std::size_t patches = cfg.tokens - 1;
  BlockDenseMatrix flat(patches, cfg.patch_len(), cfg.block);
  for (std::size_t p = 0; p < patches; ++p) {
    const std::size_t py = p / grid_w, px = p % grid_w;
    std::size_t idx = 0;
    for (std::size_t dy = 0; dy < cfg.patch; ++dy)
      for (std::size_t dx = 0; dx < cfg.patch; ++dx)
        for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
          const std::size_t y = py * cfg.patch + dy;
          const std::size_t xcoord = px * cfg.patch + dx;
          flat.at(p, idx++) =
              image[(y * cfg.image_w + xcoord) * cfg.channels + ch];
        }
  }
  BlockDenseMatrix projected = dbmm_ref(flat, m.patch_proj);

  BlockDenseMatrix z(cfg.tokens, cfg.dim, cfg.block);
  for (std::size_t c = 0; c < cfg.dim; ++c) z.at(0, c) = m.class_token[c];
  for (std::size_t p = 0; p < patches; ++p)
    for (std::size_t c = 0; c < cfg.dim; ++c)
      z.at(p + 1, c) = projected.at(p, c);
  for (std::size_t r = 0; r < cfg.tokens; ++r)
    for (std::size_t c = 0; c < cfg.dim; ++c)
      z.at(r, c) += m.pos_embed.at(r, c);
  return z;
}

inline std::vector<double> classifier_logits(const BlockDenseMatrix& z,
                                             const ModelWeights& m,
                                             const ModelConfig& cfg) {
  BlockDenseMatrix normed = layernorm(z, m.final_gain, m.final_bias);
  std::vector<double> logits(cfg.classes, 0.0);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    double acc = 0.0;
    for (std::size_t d = 0; d < cfg.dim; ++d)
      acc += normed.at(0, d) * m.classifier.at(d, c);
    logits[c] = acc + m.classifier_bias[c];
  }
  return logits;
}

struct ForwardResult {
  std::vector<double> logits;
  std::vector<std::size_t> token_counts;  // per encoder boundary
};

inline ForwardResult model_forward(std::span<const double> image,
                                   const ModelWeights& m,
                                   const ModelConfig& cfg) {
  cfg.validate();
  if (m.encoders.size() != cfg.layers)
    throw std::invalid_argument("model_forward: encoder count mismatch");
  auto tdm = tdm_layer_set(cfg.tdm_layers, cfg.layers);
  BlockDenseMatrix z = embed(image, m, cfg);
  ForwardResult res;
  res.token_counts.push_back(z.rows());
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    const bool drop =
        std::find(tdm.begin(), tdm.end(), l) != tdm.end();
    auto enc = encoder_forward(z, m.encoders[l - 1], cfg, drop,
                               cfg.token_keep_rate);
    z = std::move(enc.out);
    res.token_counts.push_back(z.rows());
  }
  res.logits = classifier_logits(z, m, cfg);
  return res;
}

}  // namespace vitsim
