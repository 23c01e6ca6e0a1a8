#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "vitsim/block_matrix.hpp"
#include "vitsim/model.hpp"

namespace vitsim {

// Dynamic token pruning: attention-derived importance scores, top-k
// retention with fusion of the dropped tokens, and the routing table the
// hardware shuffle consumes. Row 0 of a token matrix is the class token; it
// is never ranked and never dropped.

struct TokenRouting {
  struct Entry {
    std::size_t id_old = 0;
    std::size_t id_new = 0;
    bool kept = false;  // dropped tokens route to the fused row
  };
  std::vector<Entry> entries;  // one per input token, id_old order
  std::size_t kept_count = 0;  // output rows excluding the fused token

  bool identity() const {
    if (kept_count != entries.size()) return false;
    for (const auto& e : entries)
      if (!e.kept || e.id_new != e.id_old) return false;
    return true;
  }
};

// Mean over heads of the class-token attention row. Each matrix must be a
// square N x N attention map; the result has one score per token and sums
// to one when the rows are stochastic.
inline std::vector<double> importance_scores(
    std::span<const BlockDenseMatrix> head_attention) {
  if (head_attention.empty())
    throw std::invalid_argument("importance_scores: need at least one head");
  const std::size_t n = head_attention.front().rows();
  for (const auto& a : head_attention)
    if (a.rows() != n || a.cols() != n)
      throw std::invalid_argument(
          "importance_scores: attention matrices must be square and equal");
  std::vector<double> scores(n, 0.0);
  for (const auto& a : head_attention)
    for (std::size_t j = 0; j < n; ++j) scores[j] += a.at(0, j);
  const double inv = 1.0 / static_cast<double>(head_attention.size());
  for (auto& s : scores) s *= inv;
  return scores;
}

// Keep the ceil((N-1) * keep_rate) highest-scoring non-class tokens, in
// descending score order (ties to the smaller original index), and fuse the
// dropped ones into a single score-weighted token appended last. When
// nothing is dropped the input passes through unchanged.
inline std::pair<BlockDenseMatrix, TokenRouting> select_and_fuse(
    const BlockDenseMatrix& z, std::span<const double> scores,
    double keep_rate) {
  const std::size_t n = z.rows();
  if (n < 2)
    throw std::invalid_argument("select_and_fuse: need at least two tokens");
  if (scores.size() != n)
    throw std::invalid_argument("select_and_fuse: score length mismatch");
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw std::invalid_argument(
        "select_and_fuse: keep rate must be in (0, 1]");

  const std::size_t body = n - 1;
  const std::size_t keep = static_cast<std::size_t>(
      std::ceil(keep_rate * static_cast<double>(body)));

  TokenRouting routing;
  routing.entries.resize(n);
  for (std::size_t i = 0; i < n; ++i) routing.entries[i].id_old = i;

  if (keep >= body) {
    // nothing dropped: identity, no fused row
    routing.kept_count = n;
    for (std::size_t i = 0; i < n; ++i) {
      routing.entries[i].id_new = i;
      routing.entries[i].kept = true;
    }
    return {z, routing};
  }

  std::vector<std::size_t> order(body);
  std::iota(order.begin(), order.end(), 1);  // non-class tokens
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (scores[a] != scores[b]) return scores[a] > scores[b];
                     return a < b;
                   });

  const std::size_t n_out = keep + 2;  // class + kept + fused
  BlockDenseMatrix out(n_out, z.cols(), z.block_size());
  for (std::size_t c = 0; c < z.cols(); ++c) out.at(0, c) = z.at(0, c);
  routing.entries[0].id_new = 0;
  routing.entries[0].kept = true;
  routing.kept_count = keep + 1;

  for (std::size_t t = 0; t < keep; ++t) {
    const std::size_t src = order[t];
    for (std::size_t c = 0; c < z.cols(); ++c)
      out.at(t + 1, c) = z.at(src, c);
    routing.entries[src].id_new = t + 1;
    routing.entries[src].kept = true;
  }

  double dropped_mass = 0.0;
  for (std::size_t t = keep; t < body; ++t) dropped_mass += scores[order[t]];
  const std::size_t fused_row = n_out - 1;
  for (std::size_t t = keep; t < body; ++t) {
    const std::size_t src = order[t];
    // score-weighted aggregation; uniform weights if all dropped scores are 0
    const double w = dropped_mass > 0.0
                         ? scores[src] / dropped_mass
                         : 1.0 / static_cast<double>(body - keep);
    for (std::size_t c = 0; c < z.cols(); ++c)
      out.at(fused_row, c) += w * z.at(src, c);
    routing.entries[src].id_new = fused_row;
    routing.entries[src].kept = false;
  }
  return {out, routing};
}

// Validated set of 1-based encoder indices where token dropping runs.
inline std::vector<std::size_t> tdm_layer_set(
    std::span<const std::size_t> requested, std::size_t layers) {
  std::vector<std::size_t> out(requested.begin(), requested.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (auto l : out)
    if (l < 1 || l > layers)
      throw std::invalid_argument("token-drop layer " + std::to_string(l) +
                                  " out of range for " +
                                  std::to_string(layers) + " encoders");
  return out;
}

// Token count after one drop stage under the ceil((N-1)*r)+2 rule.
inline std::size_t tokens_after_drop(std::size_t tokens, double keep_rate) {
  const std::size_t body = tokens - 1;
  const std::size_t keep = static_cast<std::size_t>(
      std::ceil(keep_rate * static_cast<double>(body)));
  return keep >= body ? tokens : keep + 2;
}

// Per-layer token counts for a whole stack (entry l = count entering
// encoder l+1; final entry = count after the last encoder).
inline std::vector<std::size_t> token_trajectory(
    std::size_t tokens, std::size_t layers,
    std::span<const std::size_t> tdm_layers, double keep_rate) {
  auto tdm = tdm_layer_set(tdm_layers, layers);
  std::vector<std::size_t> counts;
  counts.push_back(tokens);
  std::size_t n = tokens;
  for (std::size_t l = 1; l <= layers; ++l) {
    if (std::find(tdm.begin(), tdm.end(), l) != tdm.end())
      n = tokens_after_drop(n, keep_rate);
    counts.push_back(n);
  }
  return counts;
}

}  // namespace vitsim
