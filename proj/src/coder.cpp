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

#include "lpmc/coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lpmc {
namespace {

constexpr std::uint32_t kTop = 1u << 24;
constexpr std::uint32_t kSentinel = 0xA5C3u;

}  // namespace

CdfTable quantize_pmf(const std::vector<double>& pmf) {
  const std::size_t n = pmf.size();
  if (n == 0 || n > kCdfTotal) throw std::invalid_argument("quantize_pmf: bad symbol count " + std::to_string(n));
  double total = 0;
  for (double p : pmf) {
    if (!(p >= 0) || !std::isfinite(p)) throw std::invalid_argument("quantize_pmf: negative or non-finite mass");
    total += p;
  }
  const std::uint32_t spare = kCdfTotal - static_cast<std::uint32_t>(n);
  std::vector<std::uint32_t> freq(n, 1);
  std::vector<double> frac(n, 0.0);
  std::uint32_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ideal = total > 0 ? pmf[i] / total * spare : static_cast<double>(spare) / static_cast<double>(n);
    const auto whole = static_cast<std::uint32_t>(std::floor(ideal));
    freq[i] += whole;
    frac[i] = ideal - whole;
    assigned += whole;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // Rounding can leave the floor sum above the budget only by float error.
  std::uint32_t left = spare >= assigned ? spare - assigned : 0;
  for (std::size_t k = 0; left > 0; k = (k + 1) % n, --left) ++freq[order[k]];
  CdfTable cdf(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + freq[i];
  if (cdf[n] != kCdfTotal) {
    // Trim any excess from the largest bins.
    std::uint32_t excess = cdf[n] - kCdfTotal;
    while (excess > 0) {
      auto it = std::max_element(freq.begin(), freq.end());
      --*it;
      --excess;
    }
    for (std::size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + freq[i];
  }
  return cdf;
}

double table_bits(const CdfTable& cdf, int index) {
  const auto i = static_cast<std::size_t>(index);
  return -std::log2(static_cast<double>(cdf[i + 1] - cdf[i]) / kCdfTotal);
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      if (first_) {
        first_ = false;  // the leading byte is always zero and is not stored
      } else {
        out_.push_back(static_cast<std::uint8_t>(temp + carry));
      }
      temp = 0xFF;
    } while (--pending_ != 0);
    cache_ = static_cast<std::uint8_t>(static_cast<std::uint32_t>(low_) >> 24);
  }
  ++pending_;
  low_ = static_cast<std::uint64_t>(static_cast<std::uint32_t>(low_) << 8);
}

void RangeEncoder::encode_range(std::uint32_t start, std::uint32_t freq) {
  const std::uint32_t r = range_ >> kCdfPrecision;
  low_ += static_cast<std::uint64_t>(r) * start;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode(const CdfTable& cdf, int index) {
  if (index < 0 || static_cast<std::size_t>(index) + 1 >= cdf.size()) {
    throw std::out_of_range("RangeEncoder: symbol " + std::to_string(index) + " outside table");
  }
  const auto i = static_cast<std::size_t>(index);
  encode_range(cdf[i], cdf[i + 1] - cdf[i]);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  encode_range(kSentinel, 1);
  // Pick the point of [low, low + range) with the most trailing zeros.
  const std::uint64_t hi = low_ + range_ - 1;
  for (int k = 40; k >= 0; --k) {
    const std::uint64_t mask = (std::uint64_t{1} << k) - 1;
    const std::uint64_t v = (low_ + mask) & ~mask;
    if (v >= low_ && v <= hi) {
      low_ = v;
      break;
    }
  }
  for (int i = 0; i < 5; ++i) shift_low();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  const std::uint8_t b = pos_ < size_ ? data_[pos_] : 0;
  ++pos_;
  return b;
}

std::uint32_t RangeDecoder::decode_value() {
  r_ = range_ >> kCdfPrecision;
  const std::uint32_t v = code_ / r_;
  if (v >= kCdfTotal) throw CorruptStream("corrupt stream: code value out of range");
  return v;
}

void RangeDecoder::consume(std::uint32_t start, std::uint32_t freq) {
  code_ -= r_ * start;
  range_ = r_ * freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

int RangeDecoder::decode(const CdfTable& cdf) {
  const std::uint32_t v = decode_value();
  if (v >= cdf.back()) throw CorruptStream("corrupt stream: value beyond table support");
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), v);
  const auto i = static_cast<std::size_t>(it - cdf.begin()) - 1;
  consume(cdf[i], cdf[i + 1] - cdf[i]);
  return static_cast<int>(i);
}

void RangeDecoder::finish() {
  const std::uint32_t v = decode_value();
  if (v != kSentinel) throw CorruptStream("corrupt stream: sentinel mismatch");
  consume(kSentinel, 1);
}

}  // namespace lpmc
