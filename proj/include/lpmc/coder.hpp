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

// Integer CDF tables and a carry-propagating range coder with 32-bit
// range, 16-bit frequencies and byte-wise renormalization.
//
// Stream layout: the coder's always-zero leading byte is dropped, a
// 16-bit sentinel is coded after the last symbol, and the final interval
// is closed with the fewest bytes (trailing zero bytes are implied).

#ifndef LPMC_CODER_HPP_
#define LPMC_CODER_HPP_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace lpmc {

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;

class CorruptStream : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// cdf[0] = 0 < cdf[1] < ... < cdf[n] = kCdfTotal.
using CdfTable = std::vector<std::uint32_t>;

/// Quantizes a nonnegative pmf (any positive total) to a table in which
/// every symbol has mass ≥ 1; leftover mass goes by largest remainder,
/// ties to the lower index.
CdfTable quantize_pmf(const std::vector<double>& pmf);

/// -log2 of a symbol's quantized probability.
double table_bits(const CdfTable& cdf, int index);

class RangeEncoder {
 public:
  void encode(const CdfTable& cdf, int index);
  /// Codes the sentinel, closes the interval and returns the bytes. The
  /// encoder must not be reused afterwards.
  std::vector<std::uint8_t> finish();

 private:
  void encode_range(std::uint32_t start, std::uint32_t freq);
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 1;
  bool first_ = true;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(const std::uint8_t* data, std::size_t size);
  explicit RangeDecoder(const std::vector<std::uint8_t>& bytes) : RangeDecoder(bytes.data(), bytes.size()) {}

  /// Throws CorruptStream when the code value falls outside the table.
  int decode(const CdfTable& cdf);
  /// Verifies the sentinel.
  void finish();

 private:
  std::uint32_t decode_value();
  void consume(std::uint32_t start, std::uint32_t freq);
  std::uint8_t next_byte();

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t r_ = 0;
};

}  // namespace lpmc

#endif  // LPMC_CODER_HPP_
