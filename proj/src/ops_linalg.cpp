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

#include <Eigen/Core>

#include "lpmc/ops.hpp"

namespace lpmc {
namespace {

template <typename S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapR = Eigen::Map<MatR<S>>;
template <typename S>
using CMapR = Eigen::Map<const MatR<S>>;

// im2col for one image: cols[(c*k + i)*k + j, oy*wo + ox].
template <typename S>
void im2col(const S* img, Index c, Index h, Index w, Index k, Index stride, Index pad, Index ho,
            Index wo, S* cols) {
  for (Index ch = 0; ch < c; ++ch) {
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < k; ++j) {
        S* row = cols + ((ch * k + i) * k + j) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index y = oy * stride - pad + i;
          if (y < 0 || y >= h) {
            std::fill_n(row + oy * wo, wo, S(0));
            continue;
          }
          const S* src = img + (ch * h + y) * w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index x = ox * stride - pad + j;
            row[oy * wo + ox] = (x >= 0 && x < w) ? src[x] : S(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename S>
void col2im(const S* cols, Index c, Index h, Index w, Index k, Index stride, Index pad, Index ho,
            Index wo, S* img) {
  for (Index ch = 0; ch < c; ++ch) {
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < k; ++j) {
        const S* row = cols + ((ch * k + i) * k + j) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index y = oy * stride - pad + i;
          if (y < 0 || y >= h) continue;
          S* dst = img + (ch * h + y) * w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index x = ox * stride - pad + j;
            if (x >= 0 && x < w) dst[x] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

void check_conv_args(const char* op, const Shape& x, const Shape& w, Index stride, Index pad,
                     Index weight_in_axis) {
  if (x.size() != 4 || w.size() != 4) throw_shape(op, "expects 4-d input and weight");
  if (w[2] != w[3]) throw_shape(op, "square kernels only, got " + shape_str(w));
  if (stride < 1 || pad < 0) throw_shape(op, "stride must be >= 1 and padding >= 0");
  if (w[static_cast<std::size_t>(weight_in_axis)] != x[1]) {
    throw_shape(op, "weight " + shape_str(w) + " expects " +
                        std::to_string(w[static_cast<std::size_t>(weight_in_axis)]) +
                        " input channels, input " + shape_str(x) + " has " +
                        std::to_string(x[1]));
  }
}

void check_bias(const char* op, const Shape& b, Index channels) {
  if (b.size() != 1 || b[0] != channels) {
    throw_shape(op, "bias " + shape_str(b) + " for " + std::to_string(channels) + " channels");
  }
}

}  // namespace

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw_shape("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  auto out = bmm(reshape(a, {1, a.dim(0), a.dim(1)}), reshape(b, {1, b.dim(0), b.dim(1)}));
  return reshape(out, {a.dim(0), b.dim(1)});
}

template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b, bool trans_a, bool trans_b) {
  using T = Tensor<S>;
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0)) {
    throw_shape("bmm", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Index n = a.dim(0);
  const Index ar = a.dim(1), ac = a.dim(2), br = b.dim(1), bc = b.dim(2);
  const Index m = trans_a ? ac : ar, ka = trans_a ? ar : ac;
  const Index kb = trans_b ? bc : br, p = trans_b ? br : bc;
  if (ka != kb) throw_shape("bmm", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  typename T::Array v(n * m * p);
  for (Index i = 0; i < n; ++i) {
    CMapR<S> am(a.data() + i * ar * ac, ar, ac);
    CMapR<S> bm(b.data() + i * br * bc, br, bc);
    MapR<S> cm(v.data() + i * m * p, m, p);
    if (!trans_a && !trans_b) cm.noalias() = am * bm;
    else if (!trans_a && trans_b) cm.noalias() = am * bm.transpose();
    else if (trans_a && !trans_b) cm.noalias() = am.transpose() * bm;
    else cm.noalias() = am.transpose() * bm.transpose();
  }
  auto an = a.node_ptr(), bn = b.node_ptr();
  return T::make_result(
      {n, m, p}, std::move(v), {&a, &b},
      [an, bn, n, ar, ac, br, bc, m, p, trans_a, trans_b](typename T::Node& out) {
        for (Index i = 0; i < n; ++i) {
          CMapR<S> am(an->value.data() + i * ar * ac, ar, ac);
          CMapR<S> bm(bn->value.data() + i * br * bc, br, bc);
          CMapR<S> g(out.grad.data() + i * m * p, m, p);
          if (an->requires_grad) {
            MapR<S> ga(an->grad_buffer().data() + i * ar * ac, ar, ac);
            // C = op(A) op(B)
            if (!trans_a) {
              if (!trans_b) ga.noalias() += g * bm.transpose();
              else ga.noalias() += g * bm;
            } else {
              if (!trans_b) ga.noalias() += bm * g.transpose();
              else ga.noalias() += bm.transpose() * g.transpose();
            }
          }
          if (bn->requires_grad) {
            MapR<S> gb(bn->grad_buffer().data() + i * br * bc, br, bc);
            if (!trans_b) {
              if (!trans_a) gb.noalias() += am.transpose() * g;
              else gb.noalias() += am * g;
            } else {
              if (!trans_a) gb.noalias() += g.transpose() * am;
              else gb.noalias() += g.transpose() * am.transpose();
            }
          }
        }
      });
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  using T = Tensor<S>;
  if (w.ndim() != 2 || x.ndim() < 1 || x.dim(-1) != w.dim(0)) {
    throw_shape("linear", shape_str(x.shape()) + " x " + (w.defined() ? shape_str(w.shape()) : "?"));
  }
  const Index in = w.dim(0), out_dim = w.dim(1), rows = x.numel() / in;
  if (b.defined()) check_bias("linear", b.shape(), out_dim);
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  typename T::Array v(rows * out_dim);
  MapR<S> y(v.data(), rows, out_dim);
  y.noalias() = CMapR<S>(x.data(), rows, in) * CMapR<S>(w.data(), in, out_dim);
  if (b.defined()) y.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.data(), out_dim);
  auto xn = x.node_ptr(), wn = w.node_ptr();
  auto bnode = b.defined() ? b.node_ptr() : nullptr;
  return T::make_result(out_shape, std::move(v), {&x, &w, &b},
                        [xn, wn, bnode, rows, in, out_dim](typename T::Node& out) {
                          CMapR<S> g(out.grad.data(), rows, out_dim);
                          if (xn->requires_grad) {
                            MapR<S>(xn->grad_buffer().data(), rows, in).noalias() +=
                                g * CMapR<S>(wn->value.data(), in, out_dim).transpose();
                          }
                          if (wn->requires_grad) {
                            MapR<S>(wn->grad_buffer().data(), in, out_dim).noalias() +=
                                CMapR<S>(xn->value.data(), rows, in).transpose() * g;
                          }
                          if (bnode && bnode->requires_grad) {
                            bnode->grad_buffer().matrix() += g.colwise().sum().transpose();
                          }
                        });
}

template <typename S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& b) {
  using T = Tensor<S>;
  const Index c = b.numel();
  if (b.ndim() != 1 || x.ndim() < 1 || x.dim(-1) != c) {
    throw_shape("add_bias", shape_str(x.shape()) + " + " + shape_str(b.shape()));
  }
  const Index rows = x.numel() / c;
  typename T::Array v = x.value();
  MapR<S>(v.data(), rows, c).rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.data(), c);
  auto xn = x.node_ptr(), bn = b.node_ptr();
  return T::make_result(x.shape(), std::move(v), {&x, &b},
                        [xn, bn, rows, c](typename T::Node& out) {
                          if (xn->requires_grad) xn->grad_buffer() += out.grad;
                          if (bn->requires_grad) {
                            bn->grad_buffer().matrix() +=
                                CMapR<S>(out.grad.data(), rows, c).colwise().sum().transpose();
                          }
                        });
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, Index stride,
                 Index padding) {
  using T = Tensor<S>;
  check_conv_args("conv2d", x.shape(), w.shape(), stride, padding, 1);
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index o = w.dim(0), k = w.dim(2);
  if (h + 2 * padding < k || wd + 2 * padding < k) {
    throw_shape("conv2d", "input " + shape_str(x.shape()) + " smaller than kernel " +
                              std::to_string(k) + " after padding " + std::to_string(padding));
  }
  if (b.defined()) check_bias("conv2d", b.shape(), o);
  const Index ho = (h + 2 * padding - k) / stride + 1;
  const Index wo = (wd + 2 * padding - k) / stride + 1;
  const Index ckk = c * k * k, hw = ho * wo;
  typename T::Array v(n * o * hw);
  MatR<S> cols(ckk, hw);
  CMapR<S> wm(w.data(), o, ckk);
  for (Index i = 0; i < n; ++i) {
    im2col(x.data() + i * c * h * wd, c, h, wd, k, stride, padding, ho, wo, cols.data());
    MapR<S> y(v.data() + i * o * hw, o, hw);
    y.noalias() = wm * cols;
    if (b.defined()) y.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.data(), o);
  }
  auto xn = x.node_ptr(), wn = w.node_ptr();
  auto bnode = b.defined() ? b.node_ptr() : nullptr;
  return T::make_result(
      {n, o, ho, wo}, std::move(v), {&x, &w, &b},
      [xn, wn, bnode, n, c, h, wd, o, k, stride, padding, ho, wo, ckk, hw](typename T::Node& out) {
        MatR<S> cols(ckk, hw);
        MatR<S> dcols(ckk, hw);
        CMapR<S> wm(wn->value.data(), o, ckk);
        for (Index i = 0; i < n; ++i) {
          CMapR<S> g(out.grad.data() + i * o * hw, o, hw);
          if (wn->requires_grad) {
            im2col(xn->value.data() + i * c * h * wd, c, h, wd, k, stride, padding, ho, wo,
                   cols.data());
            MapR<S>(wn->grad_buffer().data(), o, ckk).noalias() += g * cols.transpose();
          }
          if (xn->requires_grad) {
            dcols.noalias() = wm.transpose() * g;
            col2im(dcols.data(), c, h, wd, k, stride, padding, ho, wo,
                   xn->grad_buffer().data() + i * c * h * wd);
          }
          if (bnode && bnode->requires_grad) {
            bnode->grad_buffer().matrix() += g.rowwise().sum();
          }
        }
      });
}

template <typename S>
Tensor<S> deconv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, Index stride,
                   Index padding) {
  using T = Tensor<S>;
  check_conv_args("deconv2d", x.shape(), w.shape(), stride, padding, 0);
  const Index n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index co = w.dim(1), k = w.dim(2);
  const Index ho = (h - 1) * stride - 2 * padding + k;
  const Index wo = (wd - 1) * stride - 2 * padding + k;
  if (ho <= 0 || wo <= 0) throw_shape("deconv2d", "empty output for " + shape_str(x.shape()));
  if (b.defined()) check_bias("deconv2d", b.shape(), co);
  const Index ckk = co * k * k, hw = h * wd, ohw = ho * wo;
  typename T::Array v = T::Array::Zero(n * co * ohw);
  MatR<S> cols(ckk, hw);
  CMapR<S> wm(w.data(), ci, ckk);
  for (Index i = 0; i < n; ++i) {
    cols.noalias() = wm.transpose() * CMapR<S>(x.data() + i * ci * hw, ci, hw);
    S* y = v.data() + i * co * ohw;
    col2im(cols.data(), co, ho, wo, k, stride, padding, h, wd, y);
    if (b.defined()) {
      MapR<S>(y, co, ohw).colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.data(), co);
    }
  }
  auto xn = x.node_ptr(), wn = w.node_ptr();
  auto bnode = b.defined() ? b.node_ptr() : nullptr;
  return T::make_result(
      {n, co, ho, wo}, std::move(v), {&x, &w, &b},
      [xn, wn, bnode, n, ci, h, wd, co, k, stride, padding, ho, wo, ckk, hw, ohw](
          typename T::Node& out) {
        MatR<S> gcols(ckk, hw);
        CMapR<S> wm(wn->value.data(), ci, ckk);
        for (Index i = 0; i < n; ++i) {
          const S* g = out.grad.data() + i * co * ohw;
          im2col(g, co, ho, wo, k, stride, padding, h, wd, gcols.data());
          if (xn->requires_grad) {
            MapR<S>(xn->grad_buffer().data() + i * ci * hw, ci, hw).noalias() += wm * gcols;
          }
          if (wn->requires_grad) {
            MapR<S>(wn->grad_buffer().data(), ci, ckk).noalias() +=
                CMapR<S>(xn->value.data() + i * ci * hw, ci, hw) * gcols.transpose();
          }
          if (bnode && bnode->requires_grad) {
            bnode->grad_buffer().matrix() += CMapR<S>(g, co, ohw).rowwise().sum();
          }
        }
      });
}

#define LPMC_INSTANTIATE(S)                                                              \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                        \
  template Tensor<S> bmm(const Tensor<S>&, const Tensor<S>&, bool, bool);               \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);      \
  template Tensor<S> add_bias(const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index, \
                            Index);                                                      \
  template Tensor<S> deconv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,     \
                              Index, Index);

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
