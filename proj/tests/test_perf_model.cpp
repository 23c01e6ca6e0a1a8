#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vitsim/perf_model.hpp"

using namespace vitsim;
using Catch::Approx;

namespace {

ComplexityInputs deit_small() {
  ComplexityInputs in;
  in.batch = 1.0;
  in.tokens = 197;
  in.dim = 384;
  in.head_dim = 64;
  in.mlp_dim = 1536;
  in.heads = 6;
  in.heads_kept = 6;
  in.tokens_kept = 197;
  return in;
}

HardwareConfig paper_hw() {
  HardwareConfig hw;
  hw.chms = 4;
  hw.pe_rows = 12;
  hw.pe_cols = 2;
  hw.pe_lanes = 8;
  hw.block = 16;
  return hw;
}

}  // namespace

TEST_CASE("dense encoder complexity") {
  auto in = deit_small();
  auto c = complexity_unpruned(in);

  SECTION("hand-multiplied MSA term") {
    // 4*H*N*D*D' = 4*6*197*384*64
    REQUIRE(c.msa == Approx(116195328.0 + 2.0 * 6 * 197 * 197 * 64));
    REQUIRE(4.0 * 6 * 197 * 384 * 64 == 116195328.0);
  }

  SECTION("doubling N doubles the linear terms and quadruples attention") {
    auto in2 = in;
    in2.tokens *= 2;
    in2.tokens_kept *= 2;
    auto c2 = complexity_unpruned(in2);
    REQUIRE(c2.layernorm == 2.0 * c.layernorm);
    REQUIRE(c2.residual == 2.0 * c.residual);
    REQUIRE(c2.mlp == 2.0 * c.mlp);
    const double att = 2.0 * 6 * 197 * 197 * 64;
    const double att2 = 2.0 * 6 * 394 * 394 * 64;
    REQUIRE(c2.msa - 2.0 * (c.msa - att) == Approx(att2));
  }

  SECTION("twelve layers land within 10% of the published 4.27G") {
    const double total = 12.0 * c.total();
    REQUIRE(total == Approx(4.544e9).epsilon(0.01));
    REQUIRE(std::abs(total - 4.27e9) / 4.27e9 < 0.10);
  }
}

TEST_CASE("pruned encoder complexity") {
  auto in = deit_small();

  SECTION("unit ratios reduce to the dense count plus the drop term") {
    auto dense = complexity_unpruned(in);
    auto pruned = complexity_pruned(in);
    REQUIRE(pruned.layernorm == dense.layernorm);
    REQUIRE(pruned.residual == dense.residual);
    REQUIRE(pruned.msa == Approx(dense.msa));
    REQUIRE(pruned.mlp == dense.mlp);
    REQUIRE(pruned.token_drop ==
            Approx(197.0 * (6.0 + 197.0 + 384.0)));
    REQUIRE(pruned.total() == Approx(dense.total() + pruned.token_drop));
  }

  SECTION("neuron ratio scales the MLP term directly") {
    auto half = in;
    half.alpha_mlp = 0.5;
    REQUIRE(complexity_pruned(half).mlp ==
            Approx(0.5 * complexity_pruned(in).mlp));
  }

  SECTION("term-by-term dominance for ratios in [0,1]") {
    auto dense = complexity_unpruned(in);
    for (double a : {0.0, 0.3, 1.0})
      for (double ap : {0.0, 0.7, 1.0})
        for (std::size_t hk : {0ul, 3ul, 6ul}) {
          auto p = in;
          p.alpha = a;
          p.alpha_proj = ap;
          p.alpha_mlp = 0.5;
          p.heads_kept = hk;
          p.tokens_kept = 140;
          auto c = complexity_pruned(p);
          REQUIRE(c.layernorm <= dense.layernorm);
          REQUIRE(c.residual <= dense.residual);
          REQUIRE(c.msa <= dense.msa + 1e-9);
          REQUIRE(c.mlp <= dense.mlp);
        }
  }

  SECTION("monotone in every dimension argument") {
    auto base = complexity_pruned(in);
    for (auto bump : {&ComplexityInputs::tokens, &ComplexityInputs::dim,
                      &ComplexityInputs::mlp_dim}) {
      auto more = in;
      more.*bump += 64;
      if (more.tokens_kept > more.tokens) more.tokens_kept = more.tokens;
      REQUIRE(complexity_pruned(more).total() >= base.total());
    }
  }

  SECTION("out-of-range ratios rejected") {
    auto bad = in;
    bad.alpha = 1.5;
    REQUIRE_THROWS_AS(complexity_pruned(bad), std::invalid_argument);
    bad = in;
    bad.heads_kept = 7;
    REQUIRE_THROWS_AS(complexity_pruned(bad), std::invalid_argument);
  }
}

TEST_CASE("kernel cycle formulas") {
  HardwareConfig hw = paper_hw();

  SECTION("the 256-cycle instance") {
    REQUIRE(cycles_sbmm(64, 64, 64, 64, 16, 1.0, hw) == 256.0);
    REQUIRE(cycles_sbmm(64, 64, 64, 64, 16, 0.5, hw) == 128.0);
  }

  SECTION("dense mode is the phi = 1 case") {
    for (std::size_t m1 : {32ul, 64ul, 197ul})
      REQUIRE(cycles_sbmm(m1, 64, 128, 64, 16, 1.0, hw) ==
              cycles_sbmm(m1, 64, 128, 64, 16, 1.0, hw));
  }

  SECTION("head-wise factor steps at the CHM boundary") {
    const double h4 = cycles_dhbmm(64, 64, 64, 4, 16, hw);
    const double h6 = cycles_dhbmm(64, 64, 64, 6, 16, hw);
    REQUIRE(h6 == 2.0 * h4);
  }

  SECTION("scaling tokens and PE rows together is invariant") {
    HardwareConfig hw2 = hw;
    hw2.pe_rows = hw.pe_rows * 2;
    // M1 doubles, pe_rows doubles; everything divides evenly
    REQUIRE(cycles_sbmm(192, 64, 128, 64, 16, 1.0, hw) ==
            cycles_sbmm(384, 64, 128, 64, 16, 1.0, hw2));
  }
}

TEST_CASE("resource model") {
  HardwareConfig hw = paper_hw();

  SECTION("unit coefficients count the multiplier array") {
    HardwareConfig unit = hw;
    unit.dsp_per_unit = 1.0;
    unit.lut_per_unit = 1.0;
    auto r = resource_model(unit);
    REQUIRE(r.dsp == 6144.0);  // 12*4*2*64
    REQUIRE(r.lut == 6144.0);
  }

  SECTION("default coefficients approximate the deployed 7088 DSPs") {
    auto r = resource_model(hw);
    REQUIRE(std::llround(r.dsp) == 7088);
    REQUIRE(r.lut == Approx(798000.0).epsilon(0.001));
  }

  SECTION("hand-summed buffer words for the deployed geometry") {
    // b=16, p_t=12, gamma=24, p_h=4, p_c=2:
    // feature 256*12*24 = 73728, column 256*2*24 = 12288,
    // result 256*12*4*2 = 24576, matched 6*max = 442368
    auto r = resource_model(hw);
    REQUIRE(r.buffer_words == 73728ull + 12288 + 24576 + 442368);
  }

  SECTION("zero buffer depth collapses the max") {
    HardwareConfig g0 = hw;
    g0.buffer_depth = 0;
    auto r = resource_model(g0);
    const std::uint64_t result = 256ull * 12 * 4 * 2;
    REQUIRE(r.buffer_words == 7 * result);
  }

  SECTION("linear in the per-unit coefficients") {
    HardwareConfig h2 = hw;
    h2.dsp_per_unit *= 2.0;
    h2.lut_per_unit *= 3.0;
    auto r1 = resource_model(hw);
    auto r2 = resource_model(h2);
    REQUIRE(r2.dsp == Approx(2.0 * r1.dsp));
    REQUIRE(r2.lut == Approx(3.0 * r1.lut));
  }
}

TEST_CASE("embedding and classifier reported separately") {
  ModelConfig cfg;  // DeiT-Small defaults
  REQUIRE(embedding_macs(cfg) == Approx(196.0 * 768.0 * 384.0));
  REQUIRE(classifier_macs(cfg) == Approx(384.0 * 1000.0));
}
