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

#include "lpmc/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lpmc {
namespace {

Index window_edge(Index tokens) {
  const auto s = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(tokens))));
  if (s * s != tokens) throw_shape("attention", "window token count " + std::to_string(tokens) + " is not square");
  return s;
}

// Seam region of coordinate c on an axis of extent n after a cyclic
// shift: 0 for the untouched body, 1 for the strip that was interior to
// the last window, 2 for the wrapped-around strip.
int region(Index c, Index n, Index s, Index shift) {
  if (c < n - s) return 0;
  if (c < n - shift) return 1;
  return 2;
}

std::vector<int> region_labels(Index h, Index w, Index s, Index shift) {
  std::vector<int> labels(static_cast<std::size_t>(h * w));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      labels[static_cast<std::size_t>(y * w + x)] = region(y, h, s, shift) * 3 + region(x, w, s, shift);
    }
  }
  return labels;
}

// Labels of window `win`, row-major inside the window.
std::vector<int> window_labels(const std::vector<int>& grid, Index w, Index s, Index win) {
  const Index per_row = w / s;
  const Index wy = win / per_row, wx = win % per_row;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(s * s));
  for (Index i = 0; i < s; ++i) {
    for (Index j = 0; j < s; ++j) {
      out.push_back(grid[static_cast<std::size_t>((wy * s + i) * w + wx * s + j)]);
    }
  }
  return out;
}

template <typename S>
struct Projected {
  Tensor<S> logits;  // [Bn, heads, L, Lk] with bias and mask applied
  Tensor<S> v;       // [Bn * heads, Lk, dh]
};

template <typename S>
Projected<S> project(const Tensor<S>& image, const Tensor<S>& prompt, const AttentionParams<S>& p,
                     const typename Tensor<S>::Array& mask, Index mask_windows, PromptMode mode) {
  using T = Tensor<S>;
  if (image.ndim() != 3) throw_shape("prompt_wmsa", "image windows must be [Bn, L, C], got " + shape_str(image.shape()));
  const Index bn = image.dim(0), len = image.dim(1), c = image.dim(2);
  const Index heads = p.heads;
  if (heads < 1 || c % heads != 0) {
    throw_shape("prompt_wmsa", std::to_string(heads) + " heads do not divide " + std::to_string(c) + " channels");
  }
  const Index dh = c / heads;
  const Index s = window_edge(len);

  T source = image;
  if (mode != PromptMode::kOff) {
    if (!prompt.defined() || prompt.ndim() != 3 || prompt.dim(0) != bn || prompt.dim(2) != c) {
      throw_shape("prompt_wmsa", "prompt windows " + (prompt.defined() ? shape_str(prompt.shape()) : "<none>") +
                                     " do not match image windows " + shape_str(image.shape()));
    }
    source = concat<S>({image, prompt}, 1);
  }
  const Index lk = source.dim(1);
  const Index lp = lk - len;

  auto split = [&](const T& t, Index n) {
    return reshape(permute(reshape(t, {bn, n, heads, dh}), {0, 2, 1, 3}), {bn * heads, n, dh});
  };
  const T undefined;
  T q = split(linear(image, p.wq, undefined), len);
  T k = split(linear(source, p.wk, undefined), lk);
  T v = split(linear(source, p.wv, undefined), lk);

  T logits = scale(bmm(q, k, false, true), static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh))));
  logits = reshape(logits, {bn, heads, len, lk});

  T bias = reshape(gather_rows_t(p.rel_table, relative_position_index(s, p.window)), {heads, len, len});
  bias = expand_bias(bias, lp);

  typename T::Array m = mask;
  Index mw = mask_windows;
  if (m.size() > 0 && m.size() != mw * len * lk) {
    throw_shape("prompt_wmsa", "mask of " + std::to_string(m.size()) + " entries for windows of " +
                                   std::to_string(len) + "x" + std::to_string(lk));
  }
  if (mode == PromptMode::kMasked) {
    if (m.size() == 0) {
      m.setZero(len * lk);
      mw = 1;
    }
    const S neg_inf = -std::numeric_limits<S>::infinity();
    for (Index w = 0; w < mw; ++w) {
      for (Index i = 0; i < len; ++i) {
        m.segment((w * len + i) * lk + len, lp).setConstant(neg_inf);
      }
    }
  }
  return {window_bias_add(logits, bias, m, mw), v};
}

}  // namespace

WindowPlan plan_windows(Index h, Index w, Index window, bool shifted) {
  WindowPlan plan;
  const Index edge = std::min(h, w);
  const bool degenerate = edge <= window;
  plan.window = degenerate ? edge : window;
  plan.shift = (shifted && !degenerate) ? plan.window / 2 : 0;
  if (plan.window < 2 || plan.window % 2 != 0 || h % plan.window != 0 || w % plan.window != 0) {
    throw_shape("plan_windows", "grid " + std::to_string(h) + "x" + std::to_string(w) +
                                    " cannot be tiled by even windows of " + std::to_string(plan.window));
  }
  plan.prompt_window = plan.window / 2;
  plan.prompt_shift = plan.shift / 2;
  return plan;
}

template <typename S>
Tensor<S> window_partition(const Tensor<S>& x, Index s) {
  if (x.ndim() != 4 || s < 1 || x.dim(1) % s != 0 || x.dim(2) % s != 0) {
    throw_shape("window_partition", shape_str(x.shape()) + " by window " + std::to_string(s));
  }
  const Index b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<S> t = reshape(x, {b, h / s, s, w / s, s, c});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(t, {b * (h / s) * (w / s), s * s, c});
}

template <typename S>
Tensor<S> window_reverse(const Tensor<S>& windows, Index s, Index batch, Index h, Index w) {
  if (windows.ndim() != 3 || h % s != 0 || w % s != 0 || windows.dim(0) != batch * (h / s) * (w / s) ||
      windows.dim(1) != s * s) {
    throw_shape("window_reverse", shape_str(windows.shape()) + " into " + std::to_string(h) + "x" +
                                      std::to_string(w) + " by window " + std::to_string(s));
  }
  const Index c = windows.dim(2);
  Tensor<S> t = reshape(windows, {batch, h / s, w / s, s, s, c});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(t, {batch, h, w, c});
}

template <typename S>
Tensor<S> expand_bias(const Tensor<S>& bias, Index prompt_tokens) {
  if (bias.ndim() != 2 && bias.ndim() != 3) throw_shape("expand_bias", "expects [L, L] or [H, L, L]");
  if (prompt_tokens == 0) return bias;
  Shape zshape = bias.shape();
  zshape.back() = prompt_tokens;
  return concat<S>({bias, Tensor<S>::zeros(zshape)}, -1);
}

std::vector<Index> relative_position_index(Index s, Index d) {
  if (s > d) throw_shape("relative_position_index", "window " + std::to_string(s) + " exceeds table window " + std::to_string(d));
  const Index span = 2 * d - 1;
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(s * s * s * s));
  for (Index i = 0; i < s * s; ++i) {
    for (Index j = 0; j < s * s; ++j) {
      const Index dr = i / s - j / s + d - 1;
      const Index dc = i % s - j % s + d - 1;
      idx.push_back(dr * span + dc);
    }
  }
  return idx;
}

template <typename S>
typename Tensor<S>::Array shifted_window_mask(Index h, Index w, Index hp, Index wp, const WindowPlan& plan,
                                              bool with_prompts) {
  typename Tensor<S>::Array mask;
  if (plan.shift == 0) return mask;
  const Index s = plan.window, sp = plan.prompt_window;
  const Index windows = (h / s) * (w / s);
  const Index len = s * s, lp = with_prompts ? sp * sp : 0, lk = len + lp;
  if (with_prompts && (hp / sp) * (wp / sp) != windows) {
    throw_shape("shifted_window_mask", "prompt grid does not tile in lockstep with the token grid");
  }
  const auto tokens = region_labels(h, w, s, plan.shift);
  const auto prompts = with_prompts ? region_labels(hp, wp, sp, plan.prompt_shift) : std::vector<int>{};
  mask.setZero(windows * len * lk);
  for (Index win = 0; win < windows; ++win) {
    const auto q = window_labels(tokens, w, s, win);
    auto keys = q;
    if (with_prompts) {
      const auto pk = window_labels(prompts, wp, sp, win);
      keys.insert(keys.end(), pk.begin(), pk.end());
    }
    for (Index i = 0; i < len; ++i) {
      for (Index j = 0; j < lk; ++j) {
        if (q[static_cast<std::size_t>(i)] != keys[static_cast<std::size_t>(j)]) {
          mask[(win * len + i) * lk + j] = static_cast<S>(kSeamMask);
        }
      }
    }
  }
  return mask;
}

template <typename S>
Tensor<S> attention_logits(const Tensor<S>& image_windows, const Tensor<S>& prompt_windows,
                           const AttentionParams<S>& p, const typename Tensor<S>::Array& mask,
                           Index mask_windows, PromptMode mode) {
  return project(image_windows, prompt_windows, p, mask, mask_windows, mode).logits;
}

template <typename S>
Tensor<S> prompt_wmsa(const Tensor<S>& image_windows, const Tensor<S>& prompt_windows,
                      const AttentionParams<S>& p, const typename Tensor<S>::Array& mask,
                      Index mask_windows, PromptMode mode, PromptMass* mass) {
  auto proj = project(image_windows, prompt_windows, p, mask, mask_windows, mode);
  const Index bn = image_windows.dim(0), len = image_windows.dim(1), c = image_windows.dim(2);
  const Index heads = p.heads, dh = c / heads, lk = proj.logits.dim(3);
  Tensor<S> attn = softmax(proj.logits);
  if (mass) {
    mass->values.assign(static_cast<std::size_t>(bn * len), 0.0);
    const auto& a = attn.value();
    for (Index b = 0; b < bn; ++b) {
      for (Index h = 0; h < heads; ++h) {
        for (Index i = 0; i < len; ++i) {
          const Index row = ((b * heads + h) * len + i) * lk;
          const double m = static_cast<double>(a.segment(row + len, lk - len).sum());
          mass->values[static_cast<std::size_t>(b * len + i)] += m / static_cast<double>(heads);
        }
      }
    }
  }
  Tensor<S> out = bmm(reshape(attn, {bn * heads, len, lk}), proj.v);
  out = reshape(permute(reshape(out, {bn, heads, len, dh}), {0, 2, 1, 3}), {bn, len, c});
  return linear(out, p.wo, p.bo);
}

template <typename S>
Tensor<S> window_attention(const Tensor<S>& tokens, const Tensor<S>& prompts, const AttentionParams<S>& p,
                           bool shifted, PromptMode mode, std::vector<double>* mass) {
  using T = Tensor<S>;
  if (tokens.ndim() != 4) throw_shape("window_attention", "tokens must be [B, h, w, C], got " + shape_str(tokens.shape()));
  const Index b = tokens.dim(0), h = tokens.dim(1), w = tokens.dim(2), c = tokens.dim(3);
  const WindowPlan plan = plan_windows(h, w, p.window, shifted);
  const bool use_prompts = mode != PromptMode::kOff;
  const Index hp = (h + 1) / 2, wp = (w + 1) / 2;
  if (use_prompts) {
    if (!prompts.defined() || prompts.shape() != Shape{b, hp, wp, c}) {
      throw_shape("window_attention", "prompt grid " + (prompts.defined() ? shape_str(prompts.shape()) : "<none>") +
                                          " must be half of token grid " + shape_str(tokens.shape()));
    }
  }
  T x = tokens;
  T pr = use_prompts ? prompts : T();
  if (plan.shift > 0) {
    x = roll(roll(x, 1, -plan.shift), 2, -plan.shift);
    if (use_prompts && plan.prompt_shift > 0) pr = roll(roll(pr, 1, -plan.prompt_shift), 2, -plan.prompt_shift);
  }
  const T xw = window_partition(x, plan.window);
  const T pw = use_prompts ? window_partition(pr, plan.prompt_window) : T();
  const auto mask = shifted_window_mask<S>(h, w, hp, wp, plan, use_prompts);
  const Index windows = (h / plan.window) * (w / plan.window);
  PromptMass pm;
  T out = prompt_wmsa(xw, pw, p, mask, windows, mode, mass ? &pm : nullptr);
  out = window_reverse(out, plan.window, b, h, w);
  if (plan.shift > 0) out = roll(roll(out, 1, plan.shift), 2, plan.shift);
  if (mass) {
    NoGradGuard guard;
    const Index len = plan.window * plan.window;
    Tensor<double> grid({b * windows, len, 1},
                        Eigen::Map<const Eigen::ArrayXd>(pm.values.data(), static_cast<Index>(pm.values.size())));
    grid = window_reverse(grid, plan.window, b, h, w);
    if (plan.shift > 0) grid = roll(roll(grid, 1, plan.shift), 2, plan.shift);
    mass->assign(grid.data(), grid.data() + grid.numel());
  }
  return out;
}

#define LPMC_INSTANTIATE(S)                                                                         \
  template Tensor<S> window_partition(const Tensor<S>&, Index);                                    \
  template Tensor<S> window_reverse(const Tensor<S>&, Index, Index, Index, Index);                 \
  template Tensor<S> expand_bias(const Tensor<S>&, Index);                                         \
  template Tensor<S>::Array shifted_window_mask<S>(Index, Index, Index, Index, const WindowPlan&, bool); \
  template Tensor<S> attention_logits(const Tensor<S>&, const Tensor<S>&, const AttentionParams<S>&, \
                                      const Tensor<S>::Array&, Index, PromptMode);                 \
  template Tensor<S> prompt_wmsa(const Tensor<S>&, const Tensor<S>&, const AttentionParams<S>&,    \
                                 const Tensor<S>::Array&, Index, PromptMode, PromptMass*);          \
  template Tensor<S> window_attention(const Tensor<S>&, const Tensor<S>&, const AttentionParams<S>&, \
                                      bool, PromptMode, std::vector<double>*);

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
