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

// Window multi-head self-attention in which prompt tokens, tiled on a
// half-resolution grid with half-size windows, extend the key/value set
// of every image window. Queries come from image tokens only; the
// relative-position bias is zero over prompt keys.

#ifndef LPMC_ATTENTION_HPP_
#define LPMC_ATTENTION_HPP_

#include <vector>

#include "lpmc/ops.hpp"

namespace lpmc {

/// Additive logit for pairs that straddle a shifted-window seam.
inline constexpr double kSeamMask = -1e9;

enum class PromptMode {
  kOff,     // no prompt tokens at all (the pretrained path)
  kOn,      // prompts extend keys and values
  kMasked,  // prompts present but their logits pinned to -inf
};

struct WindowPlan {
  Index window = 0;  // token window edge; the grid edge when the grid is small
  Index shift = 0;
  Index prompt_window = 0;
  Index prompt_shift = 0;
};

/// Grids no larger than the window collapse to a single unshifted window.
WindowPlan plan_windows(Index h, Index w, Index window, bool shifted);

/// [B, h, w, C] -> [B * h/s * w/s, s*s, C], windows in row-major order.
template <typename S> Tensor<S> window_partition(const Tensor<S>& x, Index s);
template <typename S>
Tensor<S> window_reverse(const Tensor<S>& windows, Index s, Index batch, Index h, Index w);

/// [H, L, L] (or [L, L]) -> [H, L, L + prompt_tokens] with zero columns
/// appended for the prompt keys.
template <typename S> Tensor<S> expand_bias(const Tensor<S>& bias, Index prompt_tokens);

/// Row-major s*s x s*s lookup into a (2d-1)^2 relative-position table.
std::vector<Index> relative_position_index(Index s, Index d);

/// Constant [windows, L, L + Lp] mask: kSeamMask where query and key come
/// from different regions of the cyclically shifted grid, else 0. With
/// plan.shift == 0 the mask is empty.
template <typename S>
typename Tensor<S>::Array shifted_window_mask(Index h, Index w, Index hp, Index wp,
                                              const WindowPlan& plan, bool with_prompts);

template <typename S>
struct AttentionParams {
  Tensor<S> wq, wk, wv;  // [C, C]
  Tensor<S> wo, bo;      // [C, C], [C]
  Tensor<S> rel_table;   // [(2d-1)^2, heads]
  Index heads = 1;
  Index window = 2;      // d, the pretrained window edge
};

/// Per-query attention mass on prompt keys, averaged over heads.
struct PromptMass {
  std::vector<double> values;  // [windows * L]
};

/// Pre-softmax logits [Bn, heads, L, L + Lp] for one batch of windows.
template <typename S>
Tensor<S> attention_logits(const Tensor<S>& image_windows, const Tensor<S>& prompt_windows,
                           const AttentionParams<S>& p, const typename Tensor<S>::Array& mask,
                           Index mask_windows, PromptMode mode);

/// Window attention over pre-partitioned windows: image windows [Bn, L, C], prompt windows
/// [Bn, Lp, C] (ignored for kOff). Returns image-token outputs [Bn, L, C].
template <typename S>
Tensor<S> prompt_wmsa(const Tensor<S>& image_windows, const Tensor<S>& prompt_windows,
                      const AttentionParams<S>& p, const typename Tensor<S>::Array& mask,
                      Index mask_windows, PromptMode mode, PromptMass* mass = nullptr);

/// Grid-level (S)W-MSA: tokens [B, h, w, C], prompts [B, h/2, w/2, C].
/// Handles the cyclic shift, seam mask, partition and reverse. When mass
/// is non-null it receives the prompt mass per token as a [B, h, w] grid.
template <typename S>
Tensor<S> window_attention(const Tensor<S>& tokens, const Tensor<S>& prompts,
                           const AttentionParams<S>& p, bool shifted, PromptMode mode,
                           std::vector<double>* mass = nullptr);

}  // namespace lpmc

#endif  // LPMC_ATTENTION_HPP_
