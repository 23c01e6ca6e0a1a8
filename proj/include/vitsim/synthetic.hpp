#pragma once

#include <string>
#include <vector>

#include "vitsim/model.hpp"
#include "vitsim/util.hpp"
#include "vitsim/weight_pruning.hpp"

namespace vitsim {

// Seeded synthetic models standing in for pretrained checkpoints: weights
// uniform in [-0.02, 0.02], LayerNorm at identity, biases zero unless a
// bias_scale is given. Every tensor draws from its own named stream, so the
// same (config, seed) pair reproduces byte-identical models regardless of
// generation order.

namespace detail {

inline BlockDenseMatrix random_block_dense(std::uint64_t seed,
                                           const std::string& name,
                                           std::size_t rows, std::size_t cols,
                                           std::size_t block, double lo,
                                           double hi) {
  Rng rng = named_rng(seed, name);
  BlockDenseMatrix m(rows, cols, block);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = rng.uniform(lo, hi);
  return m;
}

inline std::vector<double> random_vector(std::uint64_t seed,
                                         const std::string& name,
                                         std::size_t n, double lo, double hi) {
  Rng rng = named_rng(seed, name);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline BlockSparseMatrix full_sparse(const BlockDenseMatrix& d) {
  return compress(d, BlockMask(d.block_rows(), d.block_cols(), 1));
}

}  // namespace detail

inline ModelWeights generate_model(const ModelConfig& cfg, std::uint64_t seed,
                                   double weight_scale = 0.02,
                                   double bias_scale = 0.0) {
  cfg.validate();
  const double lo = -weight_scale, hi = weight_scale;
  ModelWeights m;
  m.patch_proj = detail::random_block_dense(seed, "embed/patch_proj",
                                            cfg.patch_len(), cfg.dim,
                                            cfg.block, lo, hi);
  m.class_token = detail::random_vector(seed, "embed/class_token", cfg.dim,
                                        lo, hi);
  m.pos_embed = detail::random_block_dense(seed, "embed/pos", cfg.tokens,
                                           cfg.dim, cfg.block, lo, hi);
  m.final_gain.assign(cfg.dim, 1.0);
  m.final_bias.assign(cfg.dim, 0.0);
  m.classifier = detail::random_block_dense(seed, "head/classifier", cfg.dim,
                                            cfg.classes, cfg.block, lo, hi);
  m.classifier_bias =
      detail::random_vector(seed, "head/classifier_bias", cfg.classes,
                            -bias_scale, bias_scale);

  for (std::size_t e = 0; e < cfg.layers; ++e) {
    const std::string p = "enc" + std::to_string(e) + "/";
    EncoderWeights w;
    w.wq = detail::full_sparse(detail::random_block_dense(
        seed, p + "wq", cfg.dim, cfg.qkv_cols(), cfg.block, lo, hi));
    w.wk = detail::full_sparse(detail::random_block_dense(
        seed, p + "wk", cfg.dim, cfg.qkv_cols(), cfg.block, lo, hi));
    w.wv = detail::full_sparse(detail::random_block_dense(
        seed, p + "wv", cfg.dim, cfg.qkv_cols(), cfg.block, lo, hi));
    w.wproj = detail::full_sparse(detail::random_block_dense(
        seed, p + "wproj", cfg.qkv_cols(), cfg.dim, cfg.block, lo, hi));
    w.w_inter = detail::random_block_dense(seed, p + "w_inter", cfg.dim,
                                           cfg.mlp_dim, cfg.block, lo, hi);
    w.w_out = detail::random_block_dense(seed, p + "w_out", cfg.mlp_dim,
                                         cfg.dim, cfg.block, lo, hi);
    w.bq = detail::random_vector(seed, p + "bq", cfg.qkv_cols(), -bias_scale,
                                 bias_scale);
    w.bk = detail::random_vector(seed, p + "bk", cfg.qkv_cols(), -bias_scale,
                                 bias_scale);
    w.bv = detail::random_vector(seed, p + "bv", cfg.qkv_cols(), -bias_scale,
                                 bias_scale);
    w.bproj = detail::random_vector(seed, p + "bproj", cfg.dim, -bias_scale,
                                    bias_scale);
    w.b_inter = detail::random_vector(seed, p + "b_inter", cfg.mlp_dim,
                                      -bias_scale, bias_scale);
    w.b_out = detail::random_vector(seed, p + "b_out", cfg.dim, -bias_scale,
                                    bias_scale);
    w.ln1_gain.assign(cfg.dim, 1.0);
    w.ln1_bias.assign(cfg.dim, 0.0);
    w.ln2_gain.assign(cfg.dim, 1.0);
    w.ln2_bias.assign(cfg.dim, 0.0);
    w.head_removed.assign(cfg.heads, 0);
    w.mlp_kept = cfg.mlp_dim;
    m.encoders.push_back(std::move(w));
  }
  return m;
}

inline std::vector<EncoderScores> generate_scores(const ModelConfig& cfg,
                                                  std::uint64_t seed) {
  cfg.validate();
  std::vector<EncoderScores> all;
  const std::size_t grid_d = (cfg.dim + cfg.block - 1) / cfg.block;
  const std::size_t grid_hd = cfg.qkv_cols() / cfg.block;
  for (std::size_t e = 0; e < cfg.layers; ++e) {
    const std::string p = "scores/enc" + std::to_string(e) + "/";
    EncoderScores s;
    auto fill = [&](ScoreGrid& g, const std::string& name, std::size_t r,
                    std::size_t c) {
      Rng rng = named_rng(seed, name);
      g = ScoreGrid(r, c);
      for (auto& v : g.values) v = rng.uniform();
    };
    fill(s.wq, p + "wq", grid_d, grid_hd);
    fill(s.wk, p + "wk", grid_d, grid_hd);
    fill(s.wv, p + "wv", grid_d, grid_hd);
    fill(s.wproj, p + "wproj", grid_hd, grid_d);
    s.mlp = detail::random_vector(seed, p + "mlp", cfg.mlp_dim, 0.0, 1.0);
    all.push_back(std::move(s));
  }
  return all;
}

// Small config for fast tests.
inline ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.dim = 32;
  cfg.head_dim = 16;
  cfg.mlp_dim = 64;
  cfg.block = 8;
  cfg.classes = 10;
  cfg.image_h = 16;
  cfg.image_w = 16;
  cfg.channels = 3;
  cfg.patch = 8;
  cfg.tokens = 5;
  cfg.tdm_layers = {2};
  cfg.token_keep_rate = 1.0;
  return cfg;
}

}  // namespace vitsim
