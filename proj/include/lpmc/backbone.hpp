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

// The pretrained transform pair and hyper path. Images are NCHW; stage
// tokens are NHWC so that window attention sees channels last.
//
//   x ─FE─▶ STB₁ ─↓─▶ STB₂ ─↓─▶ STB₃ ─↓─▶ STB₄ ─1×1─▶ y
//   ŷ ─1×1─▶ STB₄' ─↑─▶ STB₃' ─↑─▶ STB₂' ─↑─▶ STB₁' ─FU─▶ x̂
//   y ─hₐ─▶ z,   ẑ ─hₛ─▶ (μ, σ)

#ifndef LPMC_BACKBONE_HPP_
#define LPMC_BACKBONE_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lpmc/attention.hpp"
#include "lpmc/config.hpp"
#include "lpmc/params.hpp"

namespace lpmc {

/// Lower bound on the Gaussian scale emitted by the hyper-decoder.
inline constexpr double kScaleMin = 0.11;

/// One prompt grid per STL: grids[stage][layer], NHWC, half the token
/// extent of the layer it feeds.
template <typename S>
using PromptGrids = std::vector<std::vector<Tensor<S>>>;

template <typename S>
struct StlParams {
  Tensor<S> ln1_g, ln1_b;
  AttentionParams<S> attn;
  Tensor<S> ln2_g, ln2_b;
  Tensor<S> w1, b1, w2, b2;
};

/// Registers one STL's parameters under `prefix`.
template <typename S>
void init_stl(ParamStore<S>& store, const std::string& prefix, Index width, Index heads, Index window,
              Index mlp_ratio, Rng& rng);
template <typename S>
StlParams<S> stl_params(const ParamStore<S>& store, const std::string& prefix, Index heads, Index window);

/// LN → (S)W-MSA with prompts → residual → LN → MLP → residual.
template <typename S>
Tensor<S> stl_forward(const Tensor<S>& tokens, const Tensor<S>& prompt, const StlParams<S>& p, bool shifted,
                      PromptMode mode, std::vector<double>* mass = nullptr);

enum class Side { kEncoder, kDecoder };

/// Stage-level naming shared by the backbone and the prompt module.
std::string stl_prefix(Side side, int stage, int layer);

/// Token grid extent of a stage for a padded input extent.
inline Index stage_extent(const ModelConfig& cfg, Side side, int stage, Index padded) {
  const int level = side == Side::kEncoder ? stage + 1 : cfg.stages - stage;
  return padded >> level;
}

template <typename S>
class Backbone {
 public:
  using T = Tensor<S>;

  /// Fresh parameters from a seed.
  Backbone(const ModelConfig& cfg, std::uint64_t seed);
  /// Adopts an existing store; names are validated against the config.
  Backbone(const ModelConfig& cfg, ParamStore<S> params);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }

  /// Image [B, 3, H, W] → stage-1 tokens [B, H/2, W/2, C₁].
  T feature_embed(const T& x) const;

  /// Analysis transform. With mode kOff prompts may be null. When
  /// attention is non-null it receives the prompt mass of the last
  /// encoder stage, averaged over its layers, as a [B, h₄, w₄] grid.
  T encode_analysis(const T& x, const PromptGrids<S>* prompts, PromptMode mode,
                    std::vector<double>* attention = nullptr) const;
  T hyper_encode(const T& y) const;
  /// Returns (μ, σ), each shaped like y; σ ≥ kScaleMin.
  std::pair<T, T> hyper_decode(const T& z_hat) const;
  T decode_synthesis(const T& y_hat, const PromptGrids<S>* prompts, PromptMode mode) const;

  /// Names every parameter the config calls for, in creation order.
  static std::vector<std::string> expected_names(const ModelConfig& cfg);

 private:
  StlParams<S> stl(Side side, int stage, int layer) const;
  T run_stage(const T& tokens, Side side, int stage, const PromptGrids<S>* prompts, PromptMode mode,
              std::vector<double>* attention) const;
  T conv(const T& x, const std::string& name, Index stride, Index padding) const;
  T deconv(const T& x, const std::string& name, Index stride, Index padding) const;

  ModelConfig cfg_;
  ParamStore<S> params_;
};

/// NCHW ↔ NHWC.
template <typename S> Tensor<S> to_tokens(const Tensor<S>& x);
template <typename S> Tensor<S> to_image(const Tensor<S>& tokens);

}  // namespace lpmc

#endif  // LPMC_BACKBONE_HPP_
