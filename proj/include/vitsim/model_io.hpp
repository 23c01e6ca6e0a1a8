#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitsim/model.hpp"
#include "vitsim/tensor_io.hpp"
#include "vitsim/weight_pruning.hpp"

namespace vitsim {

// A model on disk is a directory: config.json plus weights.vsbm. Scores
// travel in the same container under the scores/ prefix; pruning strips
// them from its output.

namespace detail {

inline std::string enc_prefix(std::size_t e) {
  return "enc" + std::to_string(e) + "/";
}

}  // namespace detail

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"layers", cfg.layers},
      {"heads", cfg.heads},
      {"dim", cfg.dim},
      {"head_dim", cfg.head_dim},
      {"mlp_dim", cfg.mlp_dim},
      {"tokens", cfg.tokens},
      {"block", cfg.block},
      {"classes", cfg.classes},
      {"image",
       {{"height", cfg.image_h},
        {"width", cfg.image_w},
        {"channels", cfg.channels},
        {"patch", cfg.patch}}},
      {"tdm_layers", cfg.tdm_layers},
      {"token_keep_rate", cfg.token_keep_rate}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.layers = j.at("layers").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.dim = j.at("dim").get<std::size_t>();
    cfg.head_dim = j.at("head_dim").get<std::size_t>();
    cfg.mlp_dim = j.at("mlp_dim").get<std::size_t>();
    cfg.tokens = j.at("tokens").get<std::size_t>();
    cfg.block = j.at("block").get<std::size_t>();
    cfg.classes = j.at("classes").get<std::size_t>();
    const auto& img = j.at("image");
    cfg.image_h = img.at("height").get<std::size_t>();
    cfg.image_w = img.at("width").get<std::size_t>();
    cfg.channels = img.at("channels").get<std::size_t>();
    cfg.patch = img.at("patch").get<std::size_t>();
    cfg.tdm_layers = j.value("tdm_layers", cfg.tdm_layers);
    cfg.token_keep_rate = j.value("token_keep_rate", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline void save_json(const nlohmann::json& j,
                      const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline TensorContainer pack_model(const ModelWeights& m) {
  TensorContainer c;
  c.add("embed/patch_proj", m.patch_proj);
  c.add("embed/class_token", vector_tensor(m.class_token));
  c.add("embed/pos", m.pos_embed);
  c.add("head/final_gain", vector_tensor(m.final_gain));
  c.add("head/final_bias", vector_tensor(m.final_bias));
  c.add("head/classifier", m.classifier);
  c.add("head/classifier_bias", vector_tensor(m.classifier_bias));
  for (std::size_t e = 0; e < m.encoders.size(); ++e) {
    const auto p = detail::enc_prefix(e);
    const auto& w = m.encoders[e];
    c.add(p + "wq", w.wq);
    c.add(p + "wk", w.wk);
    c.add(p + "wv", w.wv);
    c.add(p + "wproj", w.wproj);
    c.add(p + "w_inter", w.w_inter);
    c.add(p + "w_out", w.w_out);
    c.add(p + "bq", vector_tensor(w.bq));
    c.add(p + "bk", vector_tensor(w.bk));
    c.add(p + "bv", vector_tensor(w.bv));
    c.add(p + "bproj", vector_tensor(w.bproj));
    c.add(p + "b_inter", vector_tensor(w.b_inter));
    c.add(p + "b_out", vector_tensor(w.b_out));
    c.add(p + "ln1_gain", vector_tensor(w.ln1_gain));
    c.add(p + "ln1_bias", vector_tensor(w.ln1_bias));
    c.add(p + "ln2_gain", vector_tensor(w.ln2_gain));
    c.add(p + "ln2_bias", vector_tensor(w.ln2_bias));
    std::vector<double> removed(w.head_removed.begin(), w.head_removed.end());
    c.add(p + "head_removed", vector_tensor(removed));
  }
  return c;
}

inline void pack_scores(TensorContainer& c,
                        const std::vector<EncoderScores>& scores) {
  for (std::size_t e = 0; e < scores.size(); ++e) {
    const auto p = "scores/" + detail::enc_prefix(e);
    const auto& s = scores[e];
    auto grid = [&](const ScoreGrid& g) {
      BlockDenseMatrix m(g.rows, g.cols, 1);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) m.at(i, j) = g.at(i, j);
      return m;
    };
    c.add(p + "wq", grid(s.wq));
    c.add(p + "wk", grid(s.wk));
    c.add(p + "wv", grid(s.wv));
    c.add(p + "wproj", grid(s.wproj));
    c.add(p + "mlp", vector_tensor(s.mlp));
  }
}

inline ModelWeights unpack_model(const TensorContainer& c,
                                 const ModelConfig& cfg) {
  ModelWeights m;
  m.patch_proj = c.dense("embed/patch_proj");
  m.class_token = tensor_vector(c.dense("embed/class_token"));
  m.pos_embed = c.dense("embed/pos");
  m.final_gain = tensor_vector(c.dense("head/final_gain"));
  m.final_bias = tensor_vector(c.dense("head/final_bias"));
  m.classifier = c.dense("head/classifier");
  m.classifier_bias = tensor_vector(c.dense("head/classifier_bias"));
  for (std::size_t e = 0; e < cfg.layers; ++e) {
    const auto p = detail::enc_prefix(e);
    EncoderWeights w;
    w.wq = c.sparse(p + "wq");
    w.wk = c.sparse(p + "wk");
    w.wv = c.sparse(p + "wv");
    w.wproj = c.sparse(p + "wproj");
    w.w_inter = c.dense(p + "w_inter");
    w.w_out = c.dense(p + "w_out");
    w.bq = tensor_vector(c.dense(p + "bq"));
    w.bk = tensor_vector(c.dense(p + "bk"));
    w.bv = tensor_vector(c.dense(p + "bv"));
    w.bproj = tensor_vector(c.dense(p + "bproj"));
    w.b_inter = tensor_vector(c.dense(p + "b_inter"));
    w.b_out = tensor_vector(c.dense(p + "b_out"));
    w.ln1_gain = tensor_vector(c.dense(p + "ln1_gain"));
    w.ln1_bias = tensor_vector(c.dense(p + "ln1_bias"));
    w.ln2_gain = tensor_vector(c.dense(p + "ln2_gain"));
    w.ln2_bias = tensor_vector(c.dense(p + "ln2_bias"));
    auto removed = tensor_vector(c.dense(p + "head_removed"));
    w.head_removed.assign(removed.size(), 0);
    for (std::size_t h = 0; h < removed.size(); ++h)
      w.head_removed[h] = removed[h] != 0.0 ? 1 : 0;
    w.mlp_kept = w.w_inter.cols();
    if (w.w_out.rows() != w.mlp_kept)
      throw std::invalid_argument(
          "model container: inconsistent MLP widths in encoder " +
          std::to_string(e));
    m.encoders.push_back(std::move(w));
  }
  return m;
}

inline bool has_scores(const TensorContainer& c) {
  return c.contains("scores/enc0/wq");
}

inline std::vector<EncoderScores> unpack_scores(const TensorContainer& c,
                                                const ModelConfig& cfg) {
  if (!has_scores(c))
    throw std::invalid_argument(
        "model container holds no pruning scores (scores/enc0/* missing); "
        "generate the model with scores or prune with keep rate 1");
  std::vector<EncoderScores> scores;
  for (std::size_t e = 0; e < cfg.layers; ++e) {
    const auto p = "scores/" + detail::enc_prefix(e);
    EncoderScores s;
    auto grid = [&](const std::string& name) {
      const auto& m = c.dense(name);
      ScoreGrid g(m.rows(), m.cols());
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) g.at(i, j) = m.at(i, j);
      return g;
    };
    s.wq = grid(p + "wq");
    s.wk = grid(p + "wk");
    s.wv = grid(p + "wv");
    s.wproj = grid(p + "wproj");
    s.mlp = tensor_vector(c.dense(p + "mlp"));
    scores.push_back(std::move(s));
  }
  return scores;
}

struct ModelBundle {
  ModelConfig config;
  ModelWeights weights;
  std::vector<EncoderScores> scores;  // empty if the container has none
};

inline void save_model(const std::filesystem::path& dir,
                       const ModelConfig& cfg, const ModelWeights& weights,
                       const std::vector<EncoderScores>* scores = nullptr) {
  std::filesystem::create_directories(dir);
  save_json(config_to_json(cfg), dir / "config.json");
  TensorContainer c = pack_model(weights);
  if (scores) pack_scores(c, *scores);
  c.write(dir / "weights.vsbm");
}

inline ModelBundle load_model(const std::filesystem::path& dir) {
  ModelBundle b;
  b.config = load_config(dir / "config.json");
  auto c = TensorContainer::read(dir / "weights.vsbm");
  b.weights = unpack_model(c, b.config);
  if (has_scores(c)) b.scores = unpack_scores(c, b.config);
  return b;
}

}  // namespace vitsim
