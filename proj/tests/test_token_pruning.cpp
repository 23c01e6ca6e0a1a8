#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vitsim/token_pruning.hpp"
#include "vitsim/util.hpp"

using namespace vitsim;
using Catch::Approx;

namespace {

BlockDenseMatrix tokens_from_rows(const std::vector<std::vector<double>>& rows,
                                  std::size_t block = 2) {
  BlockDenseMatrix m(rows.size(), rows[0].size(), block);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m.at(r, c) = rows[r][c];
  return m;
}

BlockDenseMatrix stochastic_attention(Rng& rng, std::size_t n) {
  BlockDenseMatrix a(n, n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0.0;
    std::vector<double> row(n);
    for (auto& v : row) {
      v = rng.uniform() + 1e-3;
      sum += v;
    }
    for (std::size_t c = 0; c < n; ++c) a.at(r, c) = row[c] / sum;
  }
  return a;
}

}  // namespace

TEST_CASE("importance scores average the class attention row") {
  SECTION("uniform single head") {
    BlockDenseMatrix a(4, 4, 2);
    for (std::size_t c = 0; c < 4; ++c) a.at(0, c) = 0.25;
    const BlockDenseMatrix heads[] = {a};
    auto s = importance_scores(heads);
    REQUIRE(s == std::vector<double>{0.25, 0.25, 0.25, 0.25});
  }

  SECTION("two heads average elementwise") {
    BlockDenseMatrix a(3, 3, 2), b(3, 3, 2);
    a.at(0, 0) = 1.0;
    b.at(0, 1) = 1.0;
    const BlockDenseMatrix heads[] = {a, b};
    auto s = importance_scores(heads);
    REQUIRE(s == std::vector<double>{0.5, 0.5, 0.0});
  }

  SECTION("row-stochastic heads give scores summing to one") {
    Rng rng(17);
    for (int iter = 0; iter < 10; ++iter) {
      const std::size_t n = 2 + rng.index(12);
      std::vector<BlockDenseMatrix> heads;
      for (std::size_t h = 0; h < 1 + rng.index(4); ++h)
        heads.push_back(stochastic_attention(rng, n));
      auto s = importance_scores(heads);
      REQUIRE(std::accumulate(s.begin(), s.end(), 0.0) ==
              Approx(1.0).epsilon(1e-6));
    }
  }

  SECTION("mismatched shapes rejected") {
    BlockDenseMatrix a(3, 3, 2), b(4, 4, 2), rect(3, 4, 2);
    const BlockDenseMatrix bad1[] = {a, b};
    REQUIRE_THROWS_AS(importance_scores(bad1), std::invalid_argument);
    const BlockDenseMatrix bad2[] = {rect};
    REQUIRE_THROWS_AS(importance_scores(bad2), std::invalid_argument);
    REQUIRE_THROWS_AS(importance_scores(std::span<const BlockDenseMatrix>{}),
                      std::invalid_argument);
  }
}

TEST_CASE("select_and_fuse") {
  SECTION("keep rate 1 passes tokens through unchanged") {
    auto z = tokens_from_rows({{1, 2}, {3, 4}, {5, 6}});
    std::vector<double> s{0.0, 0.7, 0.3};
    auto [out, routing] = select_and_fuse(z, s, 1.0);
    REQUIRE(out.rows() == 3);
    REQUIRE(out.to_row_major() == z.to_row_major());
    REQUIRE(routing.identity());
  }

  SECTION("hand-evaluated fusion of the dropped tokens") {
    // N=4, body scores [0.5, 0.3, 0.2]; ceil(3*0.3) = 1 token survives
    auto z = tokens_from_rows({{0, 0}, {10, 10}, {20, 40}, {-10, 30}});
    std::vector<double> s{0.0, 0.5, 0.3, 0.2};
    auto [out, routing] = select_and_fuse(z, s, 0.3);
    REQUIRE(out.rows() == 3);  // class + 1 kept + fused
    REQUIRE(out.at(1, 0) == 10.0);
    // fused = (0.3*z2 + 0.2*z3)/0.5
    REQUIRE(out.at(2, 0) == Approx((0.3 * 20.0 + 0.2 * -10.0) / 0.5));
    REQUIRE(out.at(2, 1) == Approx((0.3 * 40.0 + 0.2 * 30.0) / 0.5));
    REQUIRE(routing.entries[1].kept);
    REQUIRE(routing.entries[1].id_new == 1);
    REQUIRE_FALSE(routing.entries[2].kept);
    REQUIRE(routing.entries[2].id_new == 2);
    REQUIRE(routing.kept_count == 2);
  }

  SECTION("count law: N=197, r=0.7 keeps 140 tokens") {
    BlockDenseMatrix z(197, 8, 4);
    Rng rng(19);
    std::vector<double> s(197);
    for (auto& v : s) v = rng.uniform();
    auto [out, routing] = select_and_fuse(z, s, 0.7);
    REQUIRE(out.rows() == 140);
    REQUIRE(tokens_after_drop(197, 0.7) == 140);
  }

  SECTION("kept set equals a brute-force sort oracle") {
    Rng rng(23);
    for (int iter = 0; iter < 30; ++iter) {
      const std::size_t n = 2 + rng.index(63);
      BlockDenseMatrix z(n, 4, 2);
      std::vector<double> s(n);
      for (auto& v : s) v = rng.uniform();
      const double r = std::nextafter(rng.uniform(), 1.0);
      auto [out, routing] = select_and_fuse(z, s, r);

      std::vector<std::size_t> ids(n - 1);
      std::iota(ids.begin(), ids.end(), 1);
      std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
        return s[a] != s[b] ? s[a] > s[b] : a < b;
      });
      const std::size_t keep = static_cast<std::size_t>(
          std::ceil(r * static_cast<double>(n - 1)));
      std::vector<bool> want_kept(n, false);
      want_kept[0] = true;
      for (std::size_t t = 0; t < std::min(keep, n - 1); ++t)
        want_kept[ids[t]] = true;
      for (std::size_t i = 0; i < n; ++i)
        REQUIRE(routing.entries[i].kept == want_kept[i]);
      // kept ids_new form a permutation of [0, kept_count)
      std::vector<bool> seen(routing.kept_count, false);
      for (const auto& e : routing.entries)
        if (e.kept) {
          REQUIRE(e.id_new < routing.kept_count);
          REQUIRE_FALSE(seen[e.id_new]);
          seen[e.id_new] = true;
        }
    }
  }

  SECTION("fused token lies in the convex hull of dropped tokens") {
    Rng rng(29);
    for (int iter = 0; iter < 20; ++iter) {
      const std::size_t n = 4 + rng.index(20);
      BlockDenseMatrix z(n, 3, 2);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) z.at(i, c) = rng.uniform(-5, 5);
      std::vector<double> s(n);
      for (auto& v : s) v = rng.uniform() + 1e-6;
      auto [out, routing] = select_and_fuse(z, s, 0.5);
      if (out.rows() == n) continue;
      double lo[3] = {1e30, 1e30, 1e30}, hi[3] = {-1e30, -1e30, -1e30};
      for (const auto& e : routing.entries)
        if (!e.kept)
          for (std::size_t c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], z.at(e.id_old, c));
            hi[c] = std::max(hi[c], z.at(e.id_old, c));
          }
      for (std::size_t c = 0; c < 3; ++c) {
        const double f = out.at(out.rows() - 1, c);
        REQUIRE(f >= lo[c] - 1e-9);
        REQUIRE(f <= hi[c] + 1e-9);
      }
    }
  }

  SECTION("output count is monotone in the keep rate") {
    BlockDenseMatrix z(33, 4, 2);
    std::vector<double> s(33);
    Rng rng(31);
    for (auto& v : s) v = rng.uniform();
    std::size_t prev = 1u << 20;
    for (double r : {1.0, 0.9, 0.7, 0.5, 0.3, 0.1}) {
      auto [out, routing] = select_and_fuse(z, s, r);
      REQUIRE(out.rows() <= prev);
      prev = out.rows();
    }
  }

  SECTION("joint permutation of tokens and scores commutes") {
    Rng rng(37);
    const std::size_t n = 12;
    BlockDenseMatrix z(n, 4, 2);
    std::vector<double> s(n);
    s[0] = 0.0;
    for (std::size_t i = 1; i < n; ++i) s[i] = rng.uniform() + 1e-9;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 4; ++c) z.at(i, c) = rng.uniform(-1, 1);

    std::vector<std::size_t> perm(n - 1);
    std::iota(perm.begin(), perm.end(), 1);
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[rng.index(i)]);

    BlockDenseMatrix zp(n, 4, 2);
    std::vector<double> sp(n);
    sp[0] = s[0];
    for (std::size_t c = 0; c < 4; ++c) zp.at(0, c) = z.at(0, c);
    for (std::size_t i = 1; i < n; ++i) {
      sp[i] = s[perm[i - 1]];
      for (std::size_t c = 0; c < 4; ++c) zp.at(i, c) = z.at(perm[i - 1], c);
    }
    auto [a, ra] = select_and_fuse(z, s, 0.5);
    auto [b, rb] = select_and_fuse(zp, sp, 0.5);
    // distinct scores: outputs are sorted by score, so they must agree
    for (std::size_t r = 0; r < a.rows(); ++r)
      for (std::size_t c = 0; c < 4; ++c)
        REQUIRE(a.at(r, c) == Approx(b.at(r, c)).margin(1e-12));
  }

  SECTION("errors") {
    BlockDenseMatrix one(1, 4, 2);
    std::vector<double> s1{1.0};
    REQUIRE_THROWS_AS(select_and_fuse(one, s1, 0.5), std::invalid_argument);
    BlockDenseMatrix z(4, 4, 2);
    std::vector<double> bad{1.0, 2.0};
    REQUIRE_THROWS_AS(select_and_fuse(z, bad, 0.5), std::invalid_argument);
  }
}

TEST_CASE("tdm layer set") {
  std::vector<std::size_t> def{3, 7, 10};
  REQUIRE(tdm_layer_set(def, 12) == def);
  REQUIRE(tdm_layer_set(std::vector<std::size_t>{}, 12).empty());
  std::vector<std::size_t> bad{13};
  REQUIRE_THROWS_AS(tdm_layer_set(bad, 12), std::invalid_argument);
  std::vector<std::size_t> zero{0};
  REQUIRE_THROWS_AS(tdm_layer_set(zero, 12), std::invalid_argument);
}

TEST_CASE("token trajectory composes the drop rule") {
  std::vector<std::size_t> tdm{3, 7, 10};
  auto traj = token_trajectory(197, 12, tdm, 0.7);
  REQUIRE(traj.size() == 13);
  REQUIRE(traj[0] == 197);
  REQUIRE(traj[2] == 197);
  REQUIRE(traj[3] == 140);  // after encoder 3
  REQUIRE(traj[6] == 140);
  REQUIRE(traj[7] == 100);  // ceil(139*0.7)+2
  REQUIRE(traj[9] == 100);
  REQUIRE(traj[10] == 72);  // ceil(99*0.7)+2
  REQUIRE(traj[12] == 72);
}
