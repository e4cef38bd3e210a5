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

// Layer-adaptive prompt module. One PromptSet per target rate turns the
// image (encoder side) or the dequantized latent (decoder side) into one
// prompt grid per STL:
//
//   p_{e,0} = EPG(x)          p_{d,0} = DPG(ŷ)
//   p_i     = T_i(p_{i-1})    stride-2 conv or deconv per stage
//   p'_{i,l} = MaxPool(p'_{i,l-1}),  p'_{i,0} = p_i
//
// The per-layer pooling has no parameters.

#ifndef LPMC_LPM_HPP_
#define LPMC_LPM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "lpmc/backbone.hpp"

namespace lpmc {

template <typename S>
class PromptSet {
 public:
  using T = Tensor<S>;

  /// Final EPG/DPG projections start at zero, everything else random.
  PromptSet(const ModelConfig& cfg, int lambda_id, double lambda, std::uint64_t seed);
  PromptSet(const ModelConfig& cfg, int lambda_id, double lambda, ParamStore<S> params);

  const ModelConfig& config() const { return cfg_; }
  int lambda_id() const { return lambda_id_; }
  double lambda() const { return lambda_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }

  /// BatchNorm uses batch statistics (and updates running ones) when true.
  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  /// x [B, 3, H, W] → p_{e,0} [B, 1, H/2, W/2].
  T epg_forward(const T& x);
  /// ŷ [B, M, h, w] → p_{d,0} [B, M, h, w].
  T dpg_forward(const T& y_hat) const;
  /// p_i for one stage from p_{i-1} (both NCHW).
  T stage_transform(const T& prev, Side side, int stage) const;

  PromptGrids<S> encoder_prompts(const T& x);
  PromptGrids<S> decoder_prompts(const T& y_hat) const;

 private:
  ModelConfig cfg_;
  int lambda_id_;
  double lambda_;
  ParamStore<S> params_;
  bool training_ = false;
};

/// Chained shape-preserving max-pool: returns p'_{i,1..layers} as NHWC
/// grids from p_i in NCHW.
template <typename S>
std::vector<Tensor<S>> layer_adapt(const Tensor<S>& p_stage, int layers);

/// Encoder then decoder grids for one image.
template <typename S>
std::pair<PromptGrids<S>, PromptGrids<S>> build_prompt_sets(const Tensor<S>& x, const Tensor<S>& y_hat,
                                                            PromptSet<S>& set);

}  // namespace lpmc

#endif  // LPMC_LPM_HPP_
