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

#ifndef LPMC_TENSOR_HPP_
#define LPMC_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lpmc {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

Index shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Thrown for non-conforming operand shapes. The message carries both
/// shapes so a failing layer can be located from the log alone.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

[[noreturn]] void throw_shape(const std::string& op, const std::string& what);

// Gradient recording is on by default. Inference paths that hold frozen
// parameters record nothing anyway; the guard is for mixed cases.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename Scalar>
struct Node {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Array value;
  Array grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  Array& grad_buffer() {
    if (grad.size() != value.size()) grad.setZero(value.size());
    return grad;
  }
};

}  // namespace detail

/// Dense row-major N-d array with optional participation in a reverse-mode
/// tape. Copies are shallow handles; use clone() for a deep copy.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Node = detail::Node<Scalar>;

  Tensor() = default;
  Tensor(Shape shape, Array value);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, Scalar v);
  static Tensor from(const Shape& shape, std::initializer_list<Scalar> values);
  static Tensor scalar(Scalar v) { return full({}, v); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index ndim() const { return static_cast<Index>(node_->shape.size()); }
  // Negative axes count from the back.
  Index dim(Index axis) const;
  Index numel() const { return node_->value.size(); }

  const Array& value() const { return node_->value; }
  // Mutable access is for optimizers and initializers; never mutate a
  // tensor that is still referenced by an unreleased tape.
  Array& value() { return node_->value; }
  const Scalar* data() const { return node_->value.data(); }
  Scalar* data() { return node_->value.data(); }
  Scalar item() const;
  Scalar at(std::initializer_list<Index> idx) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return node_ && node_->grad.size() == numel(); }
  const Array& grad() const;
  void zero_grad();

  /// Same values, new leaf with no history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  template <typename Fn>
  static Tensor make_result(Shape shape, Array value,
                            std::initializer_list<const Tensor*> inputs,
                            Fn&& backward);

 private:
  std::shared_ptr<Node> node_;
};

/// Populates grads for every requires_grad leaf reachable from the scalar
/// loss. Leaf grads accumulate across calls; interior grads are reset.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

// ---------------------------------------------------------------------------

template <typename S>
Tensor<S>::Tensor(Shape shape, Array value) : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != value.size()) {
    throw_shape("Tensor", "shape " + shape_str(shape) + " holds " +
                              std::to_string(shape_numel(shape)) +
                              " scalars, got " + std::to_string(value.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(value);
}

template <typename S>
Tensor<S> Tensor<S>::zeros(const Shape& shape) {
  return Tensor(shape, Array::Zero(shape_numel(shape)));
}

template <typename S>
Tensor<S> Tensor<S>::full(const Shape& shape, S v) {
  return Tensor(shape, Array::Constant(shape_numel(shape), v));
}

template <typename S>
Tensor<S> Tensor<S>::from(const Shape& shape, std::initializer_list<S> values) {
  Array a(static_cast<Index>(values.size()));
  Index i = 0;
  for (S v : values) a[i++] = v;
  return Tensor(shape, std::move(a));
}

template <typename S>
Index Tensor<S>::dim(Index axis) const {
  const Index n = ndim();
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw_shape("dim", "axis out of range for " + shape_str(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename S>
S Tensor<S>::item() const {
  if (numel() != 1) throw_shape("item", "non-scalar " + shape_str(shape()));
  return node_->value[0];
}

template <typename S>
S Tensor<S>::at(std::initializer_list<Index> idx) const {
  if (static_cast<Index>(idx.size()) != ndim()) {
    throw_shape("at", "rank mismatch for " + shape_str(shape()));
  }
  Index flat = 0;
  std::size_t d = 0;
  for (Index i : idx) flat = flat * node_->shape[d++] + i;
  return node_->value[flat];
}

template <typename S>
Tensor<S>& Tensor<S>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename S>
const typename Tensor<S>::Array& Tensor<S>::grad() const {
  if (!has_grad()) node_->grad.setZero(node_->value.size());
  return node_->grad;
}

template <typename S>
void Tensor<S>::zero_grad() {
  if (node_) node_->grad.setZero(node_->value.size());
}

template <typename S>
Tensor<S> Tensor<S>::detach() const {
  return Tensor(node_->shape, node_->value);
}

template <typename S>
template <typename Fn>
Tensor<S> Tensor<S>::make_result(Shape shape, Array value,
                                 std::initializer_list<const Tensor*> inputs,
                                 Fn&& backward) {
  Tensor out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const Tensor* t : inputs) any = any || (t->defined() && t->requires_grad());
  if (!any) return out;
  out.node_->requires_grad = true;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) out.node_->parents.push_back(t->node_);
  }
  out.node_->backward_fn = std::forward<Fn>(backward);
  return out;
}

}  // namespace lpmc

#endif  // LPMC_TENSOR_HPP_
