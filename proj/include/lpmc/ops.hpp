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

// Differentiable primitives over Tensor<Scalar>. Every op is defined in
// src/ and explicitly instantiated for float and double.
//
// Broadcasting is deliberately narrow: elementwise binaries require equal
// shapes; the only implicit expansions are bias-adds over the last axis
// (add_bias, linear), per-channel bias in the convolutions, and the
// attention bias/mask add.

#ifndef LPMC_OPS_HPP_
#define LPMC_OPS_HPP_

#include <vector>

#include "lpmc/tensor.hpp"

namespace lpmc {

// Elementwise.
template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> scale(const Tensor<S>& a, S s);
template <typename S> Tensor<S> add_scalar(const Tensor<S>& a, S s);
/// a + c for a constant array c (no gradient to c).
template <typename S>
Tensor<S> add_constant(const Tensor<S>& a, const typename Tensor<S>::Array& c);

template <typename S> Tensor<S> gelu(const Tensor<S>& a);  // tanh form
template <typename S> Tensor<S> leaky_relu(const Tensor<S>& a, S slope = S(0.01));
template <typename S> Tensor<S> tanh(const Tensor<S>& a);
template <typename S> Tensor<S> abs(const Tensor<S>& a);
template <typename S> Tensor<S> log(const Tensor<S>& a);
template <typename S> Tensor<S> exp(const Tensor<S>& a);
template <typename S> Tensor<S> sigmoid(const Tensor<S>& a);
template <typename S> Tensor<S> softplus(const Tensor<S>& a);
template <typename S> Tensor<S> square(const Tensor<S>& a);

template <typename S> Tensor<S> sum(const Tensor<S>& a);
template <typename S> Tensor<S> mean(const Tensor<S>& a);

// Shape manipulation. reshape accepts a single -1 extent.
template <typename S> Tensor<S> reshape(const Tensor<S>& a, Shape shape);
template <typename S> Tensor<S> permute(const Tensor<S>& a, const std::vector<int>& axes);
template <typename S> Tensor<S> concat(const std::vector<Tensor<S>>& parts, Index axis);
template <typename S> Tensor<S> slice(const Tensor<S>& a, Index axis, Index start, Index length);
/// torch.roll semantics: out[i] = a[(i - shift) mod n] along axis.
template <typename S> Tensor<S> roll(const Tensor<S>& a, Index axis, Index shift);

enum class PadMode { kZero, kReplicate };
/// Pads the two trailing (spatial) axes of an NCHW tensor on the
/// bottom/right only.
template <typename S>
Tensor<S> pad2d(const Tensor<S>& x, Index pad_h, Index pad_w, PadMode mode);

// Linear algebra.
template <typename S> Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);
/// Batched [n,m,k] x [n,k,p]; trans flags transpose the trailing two axes.
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b, bool trans_a = false, bool trans_b = false);
/// x[..., in] * w[in, out] (+ b[out]); b may be undefined.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);
template <typename S> Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& b);

// Convolutional.
/// x[N,C,H,W], w[O,C,k,k], b[O] (or undefined).
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, Index stride,
                 Index padding);
/// Transposed convolution: x[N,I,H,W], w[I,O,k,k], b[O]; output extent
/// (H - 1) * stride - 2 * padding + k. Exactly the adjoint of conv2d.
template <typename S>
Tensor<S> deconv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, Index stride,
                   Index padding);
/// Max pooling with -inf padding; ties route to the first cell in
/// row-major order.
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, Index kernel, Index stride, Index padding);

// Normalization and attention plumbing.
template <typename S> Tensor<S> softmax(const Tensor<S>& a);  // last axis
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5));

template <typename S>
struct BatchNormStats {
  Tensor<S> running_mean;
  Tensor<S> running_var;
};

/// Per-channel batch norm over NCHW. In training mode batch statistics are
/// used and the running statistics are updated in place.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     BatchNormStats<S>& stats, bool training, S momentum = S(0.1),
                     S eps = S(1e-5));

/// logits[G, H, L, Lk] + bias[H, L, Lk] + mask[G % windows, L, Lk]. The
/// mask is a constant; pass an empty array for none.
template <typename S>
Tensor<S> window_bias_add(const Tensor<S>& logits, const Tensor<S>& bias,
                          const typename Tensor<S>::Array& mask, Index mask_windows);

/// out[h, i] = table[index[i], h] for a [T, H] table; returns [H, n].
template <typename S>
Tensor<S> gather_rows_t(const Tensor<S>& table, const std::vector<Index>& index);

// Expression sugar.
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, S s) { return scale(a, s); }
template <typename S>
Tensor<S> operator*(S s, const Tensor<S>& a) { return scale(a, s); }
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, S s) { return add_scalar(a, s); }

}  // namespace lpmc

#endif  // LPMC_OPS_HPP_
