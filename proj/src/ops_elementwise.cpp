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

#include "lpmc/ops.hpp"

namespace lpmc {
namespace {

template <typename S>
void require_same(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw_shape(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// y = f(x); backward multiplies by df(x, y).
template <typename S, typename F, typename DF>
Tensor<S> unary(const Tensor<S>& a, F f, DF df) {
  using T = Tensor<S>;
  typename T::Array y = a.value().unaryExpr(f);
  auto an = a.node_ptr();
  return T::make_result(a.shape(), std::move(y), {&a},
                        [an, df](typename T::Node& out) {
                          auto& g = an->grad_buffer();
                          const Index n = out.value.size();
                          for (Index i = 0; i < n; ++i) {
                            g[i] += out.grad[i] * df(an->value[i], out.value[i]);
                          }
                        });
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  require_same("add", a, b);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return T::make_result(a.shape(), a.value() + b.value(), {&a, &b},
                        [an, bn](typename T::Node& out) {
                          if (an->requires_grad) an->grad_buffer() += out.grad;
                          if (bn->requires_grad) bn->grad_buffer() += out.grad;
                        });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  require_same("sub", a, b);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return T::make_result(a.shape(), a.value() - b.value(), {&a, &b},
                        [an, bn](typename T::Node& out) {
                          if (an->requires_grad) an->grad_buffer() += out.grad;
                          if (bn->requires_grad) bn->grad_buffer() -= out.grad;
                        });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  require_same("mul", a, b);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return T::make_result(a.shape(), a.value() * b.value(), {&a, &b},
                        [an, bn](typename T::Node& out) {
                          if (an->requires_grad) an->grad_buffer() += out.grad * bn->value;
                          if (bn->requires_grad) bn->grad_buffer() += out.grad * an->value;
                        });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S s) {
  using T = Tensor<S>;
  auto an = a.node_ptr();
  return T::make_result(a.shape(), a.value() * s, {&a}, [an, s](typename T::Node& out) {
    an->grad_buffer() += out.grad * s;
  });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S s) {
  using T = Tensor<S>;
  auto an = a.node_ptr();
  return T::make_result(a.shape(), a.value() + s, {&a},
                        [an](typename T::Node& out) { an->grad_buffer() += out.grad; });
}

template <typename S>
Tensor<S> add_constant(const Tensor<S>& a, const typename Tensor<S>::Array& c) {
  using T = Tensor<S>;
  if (c.size() != a.numel()) throw_shape("add_constant", "size mismatch");
  auto an = a.node_ptr();
  return T::make_result(a.shape(), a.value() + c, {&a},
                        [an](typename T::Node& out) { an->grad_buffer() += out.grad; });
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
  constexpr S kC = S(0.7978845608028654);  // sqrt(2/pi)
  constexpr S kA = S(0.044715);
  return unary(
      a,
      [](S x) { return S(0.5) * x * (S(1) + std::tanh(kC * (x + kA * x * x * x))); },
      [](S x, S) {
        const S t = std::tanh(kC * (x + kA * x * x * x));
        return S(0.5) * (S(1) + t) +
               S(0.5) * x * (S(1) - t * t) * kC * (S(1) + S(3) * kA * x * x);
      });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& a, S slope) {
  return unary(
      a, [slope](S x) { return x > S(0) ? x : slope * x; },
      [slope](S x, S) { return x > S(0) ? S(1) : slope; });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  return unary(a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& a) {
  return unary(
      a, [](S x) { return std::abs(x); },
      [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  return unary(a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& a) {
  return unary(a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  return unary(
      a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& a) {
  return unary(
      a,
      [](S x) { return x > S(20) ? x : std::log1p(std::exp(x)); },
      [](S x, S) { return S(1) / (S(1) + std::exp(-x)); });
}

template <typename S>
Tensor<S> square(const Tensor<S>& a) {
  return unary(a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  using T = Tensor<S>;
  typename T::Array v(1);
  v[0] = a.value().sum();
  auto an = a.node_ptr();
  return T::make_result({}, std::move(v), {&a}, [an](typename T::Node& out) {
    an->grad_buffer() += out.grad[0];
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.numel()));
}

#define LPMC_INSTANTIATE(S)                                                              \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                           \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                           \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                           \
  template Tensor<S> scale(const Tensor<S>&, S);                                        \
  template Tensor<S> add_scalar(const Tensor<S>&, S);                                   \
  template Tensor<S> add_constant(const Tensor<S>&, const Tensor<S>::Array&);           \
  template Tensor<S> gelu(const Tensor<S>&);                                            \
  template Tensor<S> leaky_relu(const Tensor<S>&, S);                                   \
  template Tensor<S> tanh(const Tensor<S>&);                                            \
  template Tensor<S> abs(const Tensor<S>&);                                             \
  template Tensor<S> log(const Tensor<S>&);                                             \
  template Tensor<S> exp(const Tensor<S>&);                                             \
  template Tensor<S> sigmoid(const Tensor<S>&);                                         \
  template Tensor<S> softplus(const Tensor<S>&);                                        \
  template Tensor<S> square(const Tensor<S>&);                                          \
  template Tensor<S> sum(const Tensor<S>&);                                             \
  template Tensor<S> mean(const Tensor<S>&);

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
