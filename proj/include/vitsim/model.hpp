#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitsim/block_matrix.hpp"

namespace vitsim {

// Encoder-stack hyper-parameters. `tokens` includes the class token;
// `tdm_layers` are 1-based encoder indices where token dropping runs.
struct ModelConfig {
  std::size_t layers = 12;
  std::size_t heads = 6;
  std::size_t dim = 384;       // token embedding length
  std::size_t head_dim = 64;   // per-head width
  std::size_t mlp_dim = 1536;  // hidden width of the MLP block
  std::size_t tokens = 197;
  std::size_t block = 16;
  std::size_t classes = 1000;
  std::size_t image_h = 224, image_w = 224, channels = 3, patch = 16;
  std::vector<std::size_t> tdm_layers{3, 7, 10};
  double token_keep_rate = 1.0;

  std::size_t qkv_cols() const { return heads * head_dim; }
  std::size_t patch_len() const { return patch * patch * channels; }

  void validate() const {
    if (layers == 0 || heads == 0 || dim == 0 || head_dim == 0 ||
        mlp_dim == 0 || block == 0 || classes == 0)
      throw std::invalid_argument("model config: dimensions must be positive");
    if (dim != heads * head_dim)
      throw std::invalid_argument(
          "model config: dim must equal heads * head_dim");
    if (head_dim % block != 0)
      throw std::invalid_argument(
          "model config: head_dim must be a multiple of the block size");
    if (patch == 0 || image_h % patch != 0 || image_w % patch != 0)
      throw std::invalid_argument(
          "model config: patch must divide the image dimensions");
    if (tokens != (image_h / patch) * (image_w / patch) + 1)
      throw std::invalid_argument(
          "model config: tokens must equal patch count + 1");
    if (tokens < 2)
      throw std::invalid_argument("model config: need at least two tokens");
    if (token_keep_rate <= 0.0 || token_keep_rate > 1.0)
      throw std::invalid_argument(
          "model config: token keep rate must be in (0, 1]");
    for (auto l : tdm_layers)
      if (l < 1 || l > layers)
        throw std::invalid_argument("model config: token-drop layer " +
                                    std::to_string(l) + " out of range");
  }
};

// Per-encoder parameters. The four attention weights are block-sparse (full
// headers when unpruned); the MLP weights are dense with pruned neurons
// physically removed, so their true extent is D x mlp_kept / mlp_kept x D.
struct EncoderWeights {
  BlockSparseMatrix wq, wk, wv;  // dim x heads*head_dim
  BlockSparseMatrix wproj;       // heads*head_dim x dim
  BlockDenseMatrix w_inter;      // dim x mlp_kept
  BlockDenseMatrix w_out;        // mlp_kept x dim
  std::vector<double> bq, bk, bv;        // heads*head_dim
  std::vector<double> bproj;             // dim
  std::vector<double> b_inter;           // mlp_kept
  std::vector<double> b_out;             // dim
  std::vector<double> ln1_gain, ln1_bias;  // dim
  std::vector<double> ln2_gain, ln2_bias;  // dim
  std::vector<std::uint8_t> head_removed;  // per head; 1 = fully pruned
  std::size_t mlp_kept = 0;

  std::size_t heads() const { return head_removed.size(); }
  std::size_t heads_kept() const {
    std::size_t n = 0;
    for (auto r : head_removed) n += r == 0;
    return n;
  }
};

struct ModelWeights {
  BlockDenseMatrix patch_proj;  // patch_len x dim
  std::vector<double> class_token;
  BlockDenseMatrix pos_embed;  // tokens x dim
  std::vector<double> final_gain, final_bias;
  BlockDenseMatrix classifier;  // dim x classes
  std::vector<double> classifier_bias;
  std::vector<EncoderWeights> encoders;
};

}  // namespace vitsim
