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

#ifndef LPMC_PARAMS_HPP_
#define LPMC_PARAMS_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lpmc/rng.hpp"
#include "lpmc/tensor.hpp"

namespace lpmc {

/// Ordered, uniquely named collection of tensors. Non-trainable entries
/// are state (BatchNorm running statistics) that is saved with the
/// parameters but never optimized or counted.
template <typename S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<S> tensor;
    bool trainable = true;
  };

  Tensor<S>& add(const std::string& name, Tensor<S> t, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_[name] = entries_.size();
    t.set_requires_grad(trainable && !frozen_);
    entries_.push_back({name, std::move(t), trainable});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor<S>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("missing parameter " + name);
    return entries_[it->second].tensor;
  }
  Tensor<S>& get(const std::string& name) {
    return const_cast<Tensor<S>&>(static_cast<const ParamStore&>(*this).get(name));
  }
  /// Undefined tensor when absent; used for optional biases.
  Tensor<S> find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? Tensor<S>() : entries_[it->second].tensor;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  Index trainable_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.trainable ? e.tensor.numel() : 0;
    return n;
  }

  void set_frozen(bool frozen) {
    frozen_ = frozen;
    for (auto& e : entries_) e.tensor.set_requires_grad(e.trainable && !frozen);
  }
  bool frozen() const { return frozen_; }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// FNV-1a over names and the float32 image of every scalar, so float and
  /// double stores holding the same values hash alike.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
      }
    };
    for (const auto& e : entries_) {
      mix(e.name.data(), e.name.size());
      for (Index i = 0; i < e.tensor.numel(); ++i) {
        const float f = static_cast<float>(e.tensor.value()[i]);
        mix(&f, sizeof f);
      }
    }
    return h;
  }

  template <typename To>
  ParamStore<To> cast() const {
    ParamStore<To> out;
    for (const auto& e : entries_) {
      out.add(e.name, Tensor<To>(e.tensor.shape(), e.tensor.value().template cast<To>()),
              e.trainable);
    }
    out.set_frozen(frozen_);
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  bool frozen_ = false;
};

namespace init {

template <typename S>
Tensor<S> normal(const Shape& shape, double stddev, Rng& rng) {
  typename Tensor<S>::Array v(shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(stddev * rng.normal());
  return Tensor<S>(shape, std::move(v));
}

template <typename S>
Tensor<S> uniform(const Shape& shape, double bound, Rng& rng) {
  typename Tensor<S>::Array v(shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rng.uniform(-bound, bound));
  return Tensor<S>(shape, std::move(v));
}

// Kaiming-style normal for a conv/deconv weight with the given fan-in.
template <typename S>
Tensor<S> kaiming(const Shape& shape, Index fan_in, Rng& rng) {
  return normal<S>(shape, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

}  // namespace init
}  // namespace lpmc

#endif  // LPMC_PARAMS_HPP_
