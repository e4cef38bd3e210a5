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

#include <cmath>
#include <limits>

#include "lpmc/ops.hpp"

namespace lpmc {

template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, Index kernel, Index stride, Index padding) {
  using T = Tensor<S>;
  if (x.ndim() != 4) throw_shape("maxpool2d", "expects NCHW, got " + shape_str(x.shape()));
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw_shape("maxpool2d", "kernel and stride must be >= 1");
  }
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h + 2 * padding < kernel || w + 2 * padding < kernel) {
    throw_shape("maxpool2d", "input " + shape_str(x.shape()) + " smaller than kernel");
  }
  const Index ho = (h + 2 * padding - kernel) / stride + 1;
  const Index wo = (w + 2 * padding - kernel) / stride + 1;
  typename T::Array v(planes * ho * wo);
  std::vector<Index> argmax(static_cast<std::size_t>(v.size()));
  for (Index p = 0; p < planes; ++p) {
    const S* src = x.data() + p * h * w;
    for (Index oy = 0; oy < ho; ++oy) {
      for (Index ox = 0; ox < wo; ++ox) {
        S best = -std::numeric_limits<S>::infinity();
        Index best_at = -1;
        for (Index i = 0; i < kernel; ++i) {
          const Index y = oy * stride - padding + i;
          if (y < 0 || y >= h) continue;
          for (Index j = 0; j < kernel; ++j) {
            const Index xx = ox * stride - padding + j;
            if (xx < 0 || xx >= w) continue;
            // Strict comparison keeps the first maximum in row-major order.
            if (best_at < 0 || src[y * w + xx] > best) {
              best = src[y * w + xx];
              best_at = y * w + xx;
            }
          }
        }
        const Index o = (p * ho + oy) * wo + ox;
        v[o] = best;
        argmax[static_cast<std::size_t>(o)] = p * h * w + best_at;
      }
    }
  }
  auto xn = x.node_ptr();
  return T::make_result({x.dim(0), x.dim(1), ho, wo}, std::move(v), {&x},
                        [xn, argmax = std::move(argmax)](typename T::Node& out) {
                          auto& g = xn->grad_buffer();
                          for (std::size_t i = 0; i < argmax.size(); ++i) {
                            g[argmax[i]] += out.grad[static_cast<Index>(i)];
                          }
                        });
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& a) {
  using T = Tensor<S>;
  if (a.ndim() < 1 || a.dim(-1) == 0) throw_shape("softmax", "empty last axis");
  const Index n = a.dim(-1), rows = a.numel() / n;
  typename T::Array v(a.numel());
  for (Index r = 0; r < rows; ++r) {
    auto in = a.value().segment(r * n, n);
    auto out = v.segment(r * n, n);
    const S m = in.maxCoeff();
    out = (in - m).exp();
    out /= out.sum();
  }
  auto an = a.node_ptr();
  return T::make_result(a.shape(), std::move(v), {&a}, [an, rows, n](typename T::Node& out) {
    auto& g = an->grad_buffer();
    for (Index r = 0; r < rows; ++r) {
      auto y = out.value.segment(r * n, n);
      auto gy = out.grad.segment(r * n, n);
      const S dot = (y * gy).sum();
      g.segment(r * n, n) += y * (gy - dot);
    }
  });
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps) {
  using T = Tensor<S>;
  const Index c = x.dim(-1);
  if (gamma.numel() != c || beta.numel() != c) {
    throw_shape("layer_norm", shape_str(x.shape()) + " with affine " + shape_str(gamma.shape()));
  }
  const Index rows = x.numel() / c;
  typename T::Array v(x.numel());
  typename T::Array xhat(x.numel());
  typename T::Array inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    auto in = x.value().segment(r * c, c);
    const S mu = in.mean();
    const S var = (in - mu).square().mean();
    inv_std[r] = S(1) / std::sqrt(var + eps);
    xhat.segment(r * c, c) = (in - mu) * inv_std[r];
    v.segment(r * c, c) = xhat.segment(r * c, c) * gamma.value() + beta.value();
  }
  auto xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr();
  return T::make_result(
      x.shape(), std::move(v), {&x, &gamma, &beta},
      [xn, gn, bn, rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          typename T::Node& out) {
        for (Index r = 0; r < rows; ++r) {
          auto gy = out.grad.segment(r * c, c);
          auto xh = xhat.segment(r * c, c);
          if (gn->requires_grad) gn->grad_buffer() += gy * xh;
          if (bn->requires_grad) bn->grad_buffer() += gy;
          if (xn->requires_grad) {
            typename T::Array dxh = gy * gn->value;
            const S m1 = dxh.mean();
            const S m2 = (dxh * xh).mean();
            xn->grad_buffer().segment(r * c, c) += inv_std[r] * (dxh - m1 - xh * m2);
          }
        }
      });
}

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     BatchNormStats<S>& stats, bool training, S momentum, S eps) {
  using T = Tensor<S>;
  if (x.ndim() != 4) throw_shape("batch_norm", "expects NCHW, got " + shape_str(x.shape()));
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || stats.running_mean.numel() != c ||
      stats.running_var.numel() != c) {
    throw_shape("batch_norm", "parameter extent mismatch for " + shape_str(x.shape()));
  }
  const Index count = n * hw;
  typename T::Array mu(c), inv_std(c);
  for (Index ch = 0; ch < c; ++ch) {
    if (training) {
      S s = 0, ss = 0;
      for (Index i = 0; i < n; ++i) {
        auto seg = x.value().segment((i * c + ch) * hw, hw);
        s += seg.sum();
      }
      const S m = s / static_cast<S>(count);
      for (Index i = 0; i < n; ++i) {
        ss += (x.value().segment((i * c + ch) * hw, hw) - m).square().sum();
      }
      const S var = ss / static_cast<S>(count);
      mu[ch] = m;
      inv_std[ch] = S(1) / std::sqrt(var + eps);
      const S unbiased = count > 1 ? ss / static_cast<S>(count - 1) : var;
      stats.running_mean.value()[ch] = (S(1) - momentum) * stats.running_mean.value()[ch] + momentum * m;
      stats.running_var.value()[ch] = (S(1) - momentum) * stats.running_var.value()[ch] + momentum * unbiased;
    } else {
      mu[ch] = stats.running_mean.value()[ch];
      inv_std[ch] = S(1) / std::sqrt(stats.running_var.value()[ch] + eps);
    }
  }
  typename T::Array xhat(x.numel());
  typename T::Array v(x.numel());
  for (Index i = 0; i < n; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (i * c + ch) * hw;
      xhat.segment(off, hw) = (x.value().segment(off, hw) - mu[ch]) * inv_std[ch];
      v.segment(off, hw) = xhat.segment(off, hw) * gamma.value()[ch] + beta.value()[ch];
    }
  }
  auto xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr();
  return T::make_result(
      x.shape(), std::move(v), {&x, &gamma, &beta},
      [xn, gn, bn, n, c, hw, count, training, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](typename T::Node& out) {
        for (Index ch = 0; ch < c; ++ch) {
          S sum_g = 0, sum_gx = 0;
          for (Index i = 0; i < n; ++i) {
            const Index off = (i * c + ch) * hw;
            sum_g += out.grad.segment(off, hw).sum();
            sum_gx += (out.grad.segment(off, hw) * xhat.segment(off, hw)).sum();
          }
          if (gn->requires_grad) gn->grad_buffer()[ch] += sum_gx;
          if (bn->requires_grad) bn->grad_buffer()[ch] += sum_g;
          if (!xn->requires_grad) continue;
          const S k = gn->value[ch] * inv_std[ch];
          const S m1 = sum_g / static_cast<S>(count), m2 = sum_gx / static_cast<S>(count);
          for (Index i = 0; i < n; ++i) {
            const Index off = (i * c + ch) * hw;
            if (training) {
              xn->grad_buffer().segment(off, hw) +=
                  k * (out.grad.segment(off, hw) - m1 - xhat.segment(off, hw) * m2);
            } else {
              xn->grad_buffer().segment(off, hw) += k * out.grad.segment(off, hw);
            }
          }
        }
      });
}

template <typename S>
Tensor<S> window_bias_add(const Tensor<S>& logits, const Tensor<S>& bias,
                          const typename Tensor<S>::Array& mask, Index mask_windows) {
  using T = Tensor<S>;
  if (logits.ndim() != 4 || bias.ndim() != 3 || bias.dim(0) != logits.dim(1) ||
      bias.dim(1) != logits.dim(2) || bias.dim(2) != logits.dim(3)) {
    throw_shape("window_bias_add",
                shape_str(logits.shape()) + " + " + shape_str(bias.shape()));
  }
  const Index g = logits.dim(0), heads = logits.dim(1);
  const Index block = logits.dim(2) * logits.dim(3);
  const bool has_mask = mask.size() > 0;
  if (has_mask && (mask_windows < 1 || g % mask_windows != 0 || mask.size() != mask_windows * block)) {
    throw_shape("window_bias_add", "mask of " + std::to_string(mask.size()) +
                                       " entries does not tile " + shape_str(logits.shape()));
  }
  typename T::Array v = logits.value();
  for (Index i = 0; i < g; ++i) {
    for (Index h = 0; h < heads; ++h) {
      auto seg = v.segment((i * heads + h) * block, block);
      seg += bias.value().segment(h * block, block);
      if (has_mask) seg += mask.segment((i % mask_windows) * block, block);
    }
  }
  auto ln = logits.node_ptr(), bn = bias.node_ptr();
  return T::make_result(logits.shape(), std::move(v), {&logits, &bias},
                        [ln, bn, g, heads, block](typename T::Node& out) {
                          if (ln->requires_grad) ln->grad_buffer() += out.grad;
                          if (bn->requires_grad) {
                            auto& gb = bn->grad_buffer();
                            for (Index i = 0; i < g; ++i) {
                              for (Index h = 0; h < heads; ++h) {
                                gb.segment(h * block, block) +=
                                    out.grad.segment((i * heads + h) * block, block);
                              }
                            }
                          }
                        });
}

template <typename S>
Tensor<S> gather_rows_t(const Tensor<S>& table, const std::vector<Index>& index) {
  using T = Tensor<S>;
  if (table.ndim() != 2) throw_shape("gather_rows_t", "expects [T, H] table");
  const Index rows = table.dim(0), heads = table.dim(1);
  const Index n = static_cast<Index>(index.size());
  typename T::Array v(heads * n);
  for (Index i = 0; i < n; ++i) {
    const Index r = index[static_cast<std::size_t>(i)];
    if (r < 0 || r >= rows) throw_shape("gather_rows_t", "index out of range");
    for (Index h = 0; h < heads; ++h) v[h * n + i] = table.value()[r * heads + h];
  }
  auto tn = table.node_ptr();
  return T::make_result({heads, n}, std::move(v), {&table},
                        [tn, index, heads, n](typename T::Node& out) {
                          auto& g = tn->grad_buffer();
                          for (Index i = 0; i < n; ++i) {
                            const Index r = index[static_cast<std::size_t>(i)];
                            for (Index h = 0; h < heads; ++h) g[r * heads + h] += out.grad[h * n + i];
                          }
                        });
}

#define LPMC_INSTANTIATE(S)                                                              \
  template Tensor<S> maxpool2d(const Tensor<S>&, Index, Index, Index);                  \
  template Tensor<S> softmax(const Tensor<S>&);                                         \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S); \
  template Tensor<S> batch_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,   \
                                BatchNormStats<S>&, bool, S, S);                         \
  template Tensor<S> window_bias_add(const Tensor<S>&, const Tensor<S>&,                \
                                     const Tensor<S>::Array&, Index);                   \
  template Tensor<S> gather_rows_t(const Tensor<S>&, const std::vector<Index>&);

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
