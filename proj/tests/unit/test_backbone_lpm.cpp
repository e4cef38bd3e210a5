// Copyright 2026 The LPMC Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "lpmc/entropy.hpp"
#include "lpmc/lpm.hpp"
#include "support/gradcheck.hpp"
#include "support/plain_swin.hpp"

namespace lpmc {
namespace {

using testing::TD;

double max_abs_diff(const TD& a, const TD& b) {
  EXPECT_EQ(a.shape(), b.shape());
  return (a.value() - b.value()).abs().maxCoeff();
}

// Random final projections so prompts are far from inert.
void wake(PromptSet<double>& set, Rng& rng) {
  for (const char* name : {"epg.out.w", "epg.out.b", "dpg.w", "dpg.b"}) {
    TD& t = set.params().get(name);
    for (Index i = 0; i < t.numel(); ++i) t.value()[i] = rng.uniform(-0.5, 0.5);
  }
}

class DeskModel : public ::testing::Test {
 protected:
  ModelConfig cfg = ModelConfig::desk();
  Backbone<double> bb{cfg, 7};
};

TEST_F(DeskModel, FeatureEmbedShapeAndLinearity) {
  Rng rng(1);
  TD x = testing::random_tensor({1, 3, 64, 64}, rng, 0, 1);
  EXPECT_EQ(bb.feature_embed(x).shape(), (Shape{1, 32, 32, 48}));
  Backbone<double> zb(cfg, 7);
  zb.params().get("enc.embed.b").value().setZero();
  TD zero({1, 3, 64, 64}, TD::Array::Zero(3 * 64 * 64));
  EXPECT_EQ(zb.feature_embed(zero).value().abs().maxCoeff(), 0.0);
  EXPECT_THROW(bb.feature_embed(testing::random_tensor({1, 3, 60, 64}, rng)), ShapeError);
}

TEST_F(DeskModel, ShapeChain) {
  Rng rng(2);
  for (auto [h, w] : {std::pair<Index, Index>{64, 64}, {64, 128}, {128, 64}}) {
    TD x = testing::random_tensor({1, 3, h, w}, rng, 0, 1);
    TD y = bb.encode_analysis(x, nullptr, PromptMode::kOff);
    EXPECT_EQ(y.shape(), (Shape{1, 96, h / 16, w / 16}));
    TD z = bb.hyper_encode(y);
    EXPECT_EQ(z.shape(), (Shape{1, 64, h / 64, w / 64}));
    auto [mu, sigma] = bb.hyper_decode(z);
    EXPECT_EQ(mu.shape(), y.shape());
    EXPECT_EQ(sigma.shape(), y.shape());
    EXPECT_GE(sigma.value().minCoeff(), kScaleMin);
    EXPECT_EQ(bb.decode_synthesis(y, nullptr, PromptMode::kOff).shape(), x.shape());
    for (int s = 0; s < cfg.stages; ++s) {
      EXPECT_EQ(stage_extent(cfg, Side::kEncoder, s, h), h >> (s + 1));
    }
  }
}

TEST_F(DeskModel, AnalysisIsDeterministic) {
  Rng rng(3);
  TD x = testing::random_tensor({1, 3, 64, 64}, rng, 0, 1);
  PromptSet<double> set(cfg, 0, 0.0018, 11);
  wake(set, rng);
  auto grids = set.encoder_prompts(x);
  TD a = bb.encode_analysis(x, &grids, PromptMode::kOn);
  TD b = bb.encode_analysis(x, &grids, PromptMode::kOn);
  EXPECT_TRUE((a.value() == b.value()).all());
}

TEST_F(DeskModel, MaskedPromptsMatchPlainCodec) {
  Rng rng(4);
  testing::PlainSwinCodec plain{cfg, bb.params()};
  for (int i = 0; i < 2; ++i) {
    TD x = testing::random_tensor({1, 3, 64, 64}, rng, 0, 1);
    PromptSet<double> set(cfg, 1, 0.0035, 20 + i);
    wake(set, rng);
    auto egrids = set.encoder_prompts(x);
    TD y = bb.encode_analysis(x, &egrids, PromptMode::kMasked);
    EXPECT_LT(max_abs_diff(y, plain.analysis(x)), 1e-6);
    TD y_hat = quantize_round(y);
    auto dgrids = set.decoder_prompts(y_hat);
    TD xs = bb.decode_synthesis(y_hat, &dgrids, PromptMode::kMasked);
    EXPECT_LT(max_abs_diff(xs, plain.synthesis(y_hat)), 1e-6);
    // The prompts do act when enabled.
    EXPECT_GT(max_abs_diff(bb.encode_analysis(x, &egrids, PromptMode::kOn), y), 1e-6);
  }
}

TEST_F(DeskModel, MissingPromptRejected) {
  Rng rng(5);
  TD x = testing::random_tensor({1, 3, 64, 64}, rng, 0, 1);
  PromptSet<double> set(cfg, 0, 0.0018, 3);
  auto grids = set.encoder_prompts(x);
  grids[2].pop_back();
  EXPECT_ANY_THROW(bb.encode_analysis(x, &grids, PromptMode::kOn));
  EXPECT_ANY_THROW(bb.encode_analysis(x, nullptr, PromptMode::kOn));
}

TEST(BackboneGradient, HyperPath) {
  ModelConfig cfg;
  cfg.widths = {8, 8, 8, 8};
  cfg.head_dim = 4;
  cfg.latent_channels = 6;
  cfg.hyper_channels = 5;
  cfg.window = 2;
  cfg.pad_multiple = 64;
  Backbone<double> bb(cfg, 3);
  Rng rng(6);
  TD y = testing::random_tensor({1, 6, 4, 4}, rng, -2, 2);
  testing::Projection proj;
  auto f = [&] {
    auto [mu, sigma] = bb.hyper_decode(bb.hyper_encode(y));
    return add(proj(mu), proj(sigma));
  };
  auto rep = testing::grad_check_params(bb.params(), f, rng, 40);
  EXPECT_EQ(rep.checked, 40);
  EXPECT_LE(rep.max_err, testing::kFdTol) << rep.where;
}

// ----- Prompt module -------------------------------------------------------------

TEST(Lpm, GeneratorShapes) {
  ModelConfig cfg;
  PromptSet<double> set(cfg, 0, 0.0018, 1);
  Rng rng(7);
  EXPECT_EQ(set.epg_forward(testing::random_tensor({1, 3, 64, 64}, rng)).shape(), (Shape{1, 1, 32, 32}));
  EXPECT_EQ(set.dpg_forward(testing::random_tensor({1, 96, 4, 4}, rng)).shape(), (Shape{1, 96, 4, 4}));
}

TEST(Lpm, ZeroImageGivesZeroPrompt) {
  ModelConfig cfg;
  PromptSet<double> set(cfg, 0, 0.0018, 2);
  Rng rng(8);
  wake(set, rng);
  for (auto& e : set.params().entries()) {
    const auto& n = e.name;
    if (n.rfind("epg.", 0) == 0 && (n.ends_with(".b") && n.find(".bn") == std::string::npos)) e.tensor.value().setZero();
    if (n.rfind("epg.bn", 0) == 0 && n.ends_with(".b")) e.tensor.value().setZero();
  }
  TD p = set.epg_forward(TD({1, 3, 64, 64}, TD::Array::Zero(3 * 64 * 64)));
  EXPECT_EQ(p.value().abs().maxCoeff(), 0.0);
}

TEST(Lpm, IdentityDpgPassesLatentThrough) {
  ModelConfig cfg;
  PromptSet<double> set(cfg, 0, 0.0018, 3);
  TD& w = set.params().get("dpg.w");
  w.value().setZero();
  const Index m = cfg.latent_channels;
  for (Index c = 0; c < m; ++c) w.value()[((c * m + c) * 3 + 1) * 3 + 1] = 1.0;
  Rng rng(9);
  TD y = testing::random_tensor({1, m, 4, 4}, rng, -5, 5);
  EXPECT_TRUE((set.dpg_forward(y).value() == y.value()).all());
}

TEST(Lpm, StageOneHalvesTheTokenGrid) {
  ModelConfig cfg;
  PromptSet<double> set(cfg, 0, 0.0018, 4);
  Rng rng(10);
  TD p0 = testing::random_tensor({1, 1, 32, 32}, rng);
  EXPECT_EQ(set.stage_transform(p0, Side::kEncoder, 0).shape(), (Shape{1, 48, 16, 16}));
  EXPECT_THROW(set.stage_transform(p0, Side::kEncoder, 4), std::out_of_range);
  EXPECT_THROW(set.stage_transform(p0, Side::kEncoder, -1), std::out_of_range);
}

TEST(Lpm, LayerAdaptation) {
  TD c({1, 5, 4, 4}, TD::Array::Constant(80, 0.75));
  for (const TD& g : layer_adapt(c, 3)) {
    EXPECT_EQ(g.shape(), (Shape{1, 4, 4, 5}));
    EXPECT_TRUE((g.value() == 0.75).all());
  }
  Rng rng(11);
  auto grids = layer_adapt(testing::random_tensor({1, 8, 4, 4}, rng), 2);
  ASSERT_EQ(grids.size(), 2u);
  EXPECT_TRUE((grids[1].value() >= grids[0].value()).all());
  EXPECT_GT(max_abs_diff(grids[0], grids[1]), 0.0);
}

TEST(Lpm, PromptAssignmentCoversEveryLayer) {
  ModelConfig cfg;
  PromptSet<double> set(cfg, 2, 0.013, 5);
  Rng rng(12);
  TD x = testing::random_tensor({1, 3, 64, 64}, rng, 0, 1);
  TD y_hat = testing::random_tensor({1, 96, 4, 4}, rng, -3, 3);
  auto [enc, dec] = build_prompt_sets(x, y_hat, set);
  int ne = 0, nd = 0;
  const std::vector<Index> enc_extents{16, 8, 4, 4, 2};
  for (int s = 0; s < cfg.stages; ++s) {
    ASSERT_EQ(static_cast<int>(enc[static_cast<std::size_t>(s)].size()), cfg.enc_depths[static_cast<std::size_t>(s)]);
    ASSERT_EQ(static_cast<int>(dec[static_cast<std::size_t>(s)].size()), cfg.dec_depths[static_cast<std::size_t>(s)]);
    for (const TD& g : enc[static_cast<std::size_t>(s)]) {
      EXPECT_EQ(g.dim(1), enc_extents[static_cast<std::size_t>(ne++)]);
      EXPECT_EQ(g.dim(1), stage_extent(cfg, Side::kEncoder, s, 64) / 2);
      EXPECT_EQ(g.dim(2), stage_extent(cfg, Side::kEncoder, s, 64) / 2);
      EXPECT_EQ(g.dim(3), cfg.widths[static_cast<std::size_t>(s)]);
    }
    for (const TD& g : dec[static_cast<std::size_t>(s)]) {
      ++nd;
      EXPECT_EQ(g.dim(1), stage_extent(cfg, Side::kDecoder, s, 64) / 2);
      EXPECT_EQ(g.dim(3), cfg.dec_width(s));
    }
  }
  EXPECT_EQ(ne, 5);
  EXPECT_EQ(nd, 5);
  EXPECT_EQ(dec[0][0].dim(1), y_hat.dim(2) / 2);
}

TEST(Lpm, ParameterCountIndependentOfDepths) {
  ModelConfig a, b;
  b.enc_depths = {2, 2, 6, 2};
  b.dec_depths = {2, 6, 2, 2};
  EXPECT_EQ(PromptSet<double>(a, 0, 0.0018, 1).params().trainable_count(),
            PromptSet<double>(b, 0, 0.0018, 1).params().trainable_count());
  ModelConfig c;
  EXPECT_LE(static_cast<double>(PromptSet<double>(c, 0, 0.0018, 1).params().trainable_count()),
            0.25 * static_cast<double>(Backbone<double>(c, 1).params().trainable_count()));
}

TEST(Lpm, GeneratorGradients) {
  ModelConfig cfg;
  cfg.widths = {8, 8, 8, 8};
  cfg.head_dim = 4;
  cfg.latent_channels = 6;
  cfg.epg_channels = 4;
  PromptSet<double> set(cfg, 0, 0.0018, 6);
  Rng rng(13);
  wake(set, rng);
  TD x = testing::random_tensor({1, 3, 64, 64}, rng, 0, 1);
  TD y_hat = testing::random_tensor({1, 6, 4, 4}, rng, -3, 3);
  testing::Projection pe;
  auto f = [&] {
    auto [enc, dec] = build_prompt_sets(x, y_hat, set);
    TD acc = TD::scalar(0.0);
    for (auto* grids : {&enc, &dec}) {
      for (auto& stage : *grids) {
        for (auto& g : stage) acc = add(acc, pe(g));
      }
    }
    return acc;
  };
  auto rep = testing::grad_check_params(set.params(), f, rng, 40);
  EXPECT_EQ(rep.checked, 40);
  EXPECT_LE(rep.max_err, testing::kFdTol) << rep.where;
}

}  // namespace
}  // namespace lpmc
