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

#include <algorithm>
#include <numeric>

#include "lpmc/ops.hpp"

namespace lpmc {
namespace {

Index normalize_axis(Index axis, Index ndim, const char* op) {
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim) throw_shape(op, "axis out of range");
  return axis;
}

// outer x extent x inner decomposition around one axis.
struct AxisSplit {
  Index outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) {
    s.inner *= shape[static_cast<std::size_t>(i)];
  }
  return s;
}

// dst[permuted index] = src[index]; dst shape is shape permuted by axes.
template <typename S>
void permute_into(const S* src, const Shape& shape, const std::vector<int>& axes, S* dst) {
  const std::size_t n = shape.size();
  std::vector<Index> src_stride(n, 1);
  for (std::size_t i = n; i-- > 1;) src_stride[i - 1] = src_stride[i] * shape[i];
  Shape out_shape(n);
  std::vector<Index> stride(n);
  for (std::size_t i = 0; i < n; ++i) {
    out_shape[i] = shape[static_cast<std::size_t>(axes[i])];
    stride[i] = src_stride[static_cast<std::size_t>(axes[i])];
  }
  const Index total = shape_numel(shape);
  if (total == 0) return;
  if (n == 0) {
    dst[0] = src[0];
    return;
  }
  std::vector<Index> counter(n, 0);
  Index offset = 0;
  // Odometer over output indices with the innermost axis unrolled.
  const Index last = out_shape[n - 1];
  const Index last_stride = stride[n - 1];
  for (Index o = 0; o < total; o += last) {
    for (Index j = 0; j < last; ++j) dst[o + j] = src[offset + j * last_stride];
    for (std::size_t d = n - 1; d-- > 0;) {
      offset += stride[d];
      if (++counter[d] < out_shape[d]) break;
      offset -= stride[d] * out_shape[d];
      counter[d] = 0;
    }
  }
}

}  // namespace

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  using T = Tensor<S>;
  Index known = 1, wildcard = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (wildcard >= 0) throw_shape("reshape", "more than one -1 extent");
      wildcard = static_cast<Index>(i);
    } else {
      known *= shape[i];
    }
  }
  if (wildcard >= 0) {
    if (known == 0 || a.numel() % known != 0) {
      throw_shape("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    shape[static_cast<std::size_t>(wildcard)] = a.numel() / known;
  }
  if (shape_numel(shape) != a.numel()) {
    throw_shape("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto an = a.node_ptr();
  return T::make_result(std::move(shape), a.value(), {&a},
                        [an](typename T::Node& out) { an->grad_buffer() += out.grad; });
}

template <typename S>
Tensor<S> permute(const Tensor<S>& a, const std::vector<int>& axes) {
  using T = Tensor<S>;
  const Index n = a.ndim();
  if (static_cast<Index>(axes.size()) != n) throw_shape("permute", "axes rank mismatch");
  std::vector<int> inverse(axes.size(), -1);
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] < 0 || axes[i] >= n || inverse[static_cast<std::size_t>(axes[i])] != -1) {
      throw_shape("permute", "axes are not a permutation");
    }
    inverse[static_cast<std::size_t>(axes[i])] = static_cast<int>(i);
  }
  Shape out_shape(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    out_shape[i] = a.shape()[static_cast<std::size_t>(axes[i])];
  }
  typename T::Array v(a.numel());
  permute_into(a.data(), a.shape(), axes, v.data());
  auto an = a.node_ptr();
  return T::make_result(out_shape, std::move(v), {&a},
                        [an, inverse](typename T::Node& out) {
                          typename T::Array g(out.grad.size());
                          permute_into(out.grad.data(), out.shape, inverse, g.data());
                          an->grad_buffer() += g;
                        });
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, Index axis) {
  using T = Tensor<S>;
  if (parts.empty()) throw_shape("concat", "no inputs");
  const Shape& ref = parts[0].shape();
  axis = normalize_axis(axis, static_cast<Index>(ref.size()), "concat");
  Shape out_shape = ref;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != ref.size()) throw_shape("concat", "rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<Index>(i) != axis && s[i] != ref[i]) {
        throw_shape("concat", shape_str(s) + " vs " + shape_str(ref));
      }
    }
    out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
  }
  const AxisSplit o = split_at(out_shape, axis);
  typename T::Array v(shape_numel(out_shape));
  std::vector<Index> extents;
  std::vector<std::shared_ptr<typename T::Node>> nodes;
  Index offset = 0;
  for (const auto& p : parts) {
    const AxisSplit ps = split_at(p.shape(), axis);
    const Index block = ps.extent * ps.inner;
    for (Index r = 0; r < o.outer; ++r) {
      std::copy_n(p.data() + r * block, block, v.data() + r * o.extent * o.inner + offset * o.inner);
    }
    extents.push_back(ps.extent);
    nodes.push_back(p.node_ptr());
    offset += ps.extent;
  }
  T out(out_shape, std::move(v));
  if (!grad_enabled()) return out;
  bool any = std::any_of(parts.begin(), parts.end(), [](const T& p) { return p.requires_grad(); });
  if (!any) return out;
  // make_result takes an initializer_list; wire the variadic case by hand.
  auto* node = out.node();
  node->requires_grad = true;
  for (const auto& p : parts) {
    if (p.requires_grad()) node->parents.push_back(p.node_ptr());
  }
  node->backward_fn = [nodes, extents, o](typename T::Node& res) {
    Index off = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const Index block = extents[k] * o.inner;
      if (nodes[k]->requires_grad) {
        auto& g = nodes[k]->grad_buffer();
        for (Index r = 0; r < o.outer; ++r) {
          g.segment(r * block, block) +=
              res.grad.segment(r * o.extent * o.inner + off * o.inner, block);
        }
      }
      off += extents[k];
    }
  };
  return out;
}

template <typename S>
Tensor<S> slice(const Tensor<S>& a, Index axis, Index start, Index length) {
  using T = Tensor<S>;
  axis = normalize_axis(axis, a.ndim(), "slice");
  const AxisSplit s = split_at(a.shape(), axis);
  if (start < 0 || length < 0 || start + length > s.extent) {
    throw_shape("slice", "range [" + std::to_string(start) + ", " +
                             std::to_string(start + length) + ") outside " +
                             shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  typename T::Array v(shape_numel(out_shape));
  const Index block = length * s.inner;
  for (Index r = 0; r < s.outer; ++r) {
    v.segment(r * block, block) = a.value().segment(r * s.extent * s.inner + start * s.inner, block);
  }
  auto an = a.node_ptr();
  return T::make_result(out_shape, std::move(v), {&a},
                        [an, s, start, block](typename T::Node& out) {
                          auto& g = an->grad_buffer();
                          for (Index r = 0; r < s.outer; ++r) {
                            g.segment(r * s.extent * s.inner + start * s.inner, block) +=
                                out.grad.segment(r * block, block);
                          }
                        });
}

template <typename S>
Tensor<S> roll(const Tensor<S>& a, Index axis, Index shift) {
  using T = Tensor<S>;
  axis = normalize_axis(axis, a.ndim(), "roll");
  const AxisSplit s = split_at(a.shape(), axis);
  auto rolled = [s](const typename T::Array& src, Index k) {
    typename T::Array dst(src.size());
    const Index n = s.extent;
    k = ((k % n) + n) % n;
    for (Index r = 0; r < s.outer; ++r) {
      for (Index i = 0; i < n; ++i) {
        const Index from = (i - k + n) % n;
        dst.segment((r * n + i) * s.inner, s.inner) = src.segment((r * n + from) * s.inner, s.inner);
      }
    }
    return dst;
  };
  if (s.extent == 0) return a;
  auto an = a.node_ptr();
  return T::make_result(a.shape(), rolled(a.value(), shift), {&a},
                        [an, rolled, shift](typename T::Node& out) {
                          an->grad_buffer() += rolled(out.grad, -shift);
                        });
}

template <typename S>
Tensor<S> pad2d(const Tensor<S>& x, Index pad_h, Index pad_w, PadMode mode) {
  using T = Tensor<S>;
  if (x.ndim() != 4 || pad_h < 0 || pad_w < 0) throw_shape("pad2d", "expects NCHW");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index ho = h + pad_h, wo = w + pad_w;
  if ((h == 0 || w == 0) && mode == PadMode::kReplicate) throw_shape("pad2d", "empty input");
  auto source = [=](Index r, Index c, Index* src) {
    if (r < h && c < w) {
      *src = r * w + c;
      return true;
    }
    if (mode == PadMode::kZero) return false;
    *src = std::min(r, h - 1) * w + std::min(c, w - 1);
    return true;
  };
  typename T::Array v = T::Array::Zero(planes * ho * wo);
  for (Index p = 0; p < planes; ++p) {
    for (Index r = 0; r < ho; ++r) {
      for (Index c = 0; c < wo; ++c) {
        Index src;
        if (source(r, c, &src)) v[(p * ho + r) * wo + c] = x.value()[p * h * w + src];
      }
    }
  }
  auto xn = x.node_ptr();
  return T::make_result({x.dim(0), x.dim(1), ho, wo}, std::move(v), {&x},
                        [xn, source, planes, h, w, ho, wo](typename T::Node& out) {
                          auto& g = xn->grad_buffer();
                          for (Index p = 0; p < planes; ++p) {
                            for (Index r = 0; r < ho; ++r) {
                              for (Index c = 0; c < wo; ++c) {
                                Index src;
                                if (source(r, c, &src)) {
                                  g[p * h * w + src] += out.grad[(p * ho + r) * wo + c];
                                }
                              }
                            }
                          }
                        });
}

#define LPMC_INSTANTIATE(S)                                                              \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                  \
  template Tensor<S> permute(const Tensor<S>&, const std::vector<int>&);                \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, Index);                      \
  template Tensor<S> slice(const Tensor<S>&, Index, Index, Index);                      \
  template Tensor<S> roll(const Tensor<S>&, Index, Index);                              \
  template Tensor<S> pad2d(const Tensor<S>&, Index, Index, PadMode);

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
