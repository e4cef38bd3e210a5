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

// End-to-end codec: the differentiable forward pass used for training
// and evaluation, the rate-distortion loss, and the real bitstream path.

#ifndef LPMC_CODEC_HPP_
#define LPMC_CODEC_HPP_

#include <optional>
#include <vector>

#include "lpmc/coder.hpp"
#include "lpmc/entropy.hpp"
#include "lpmc/io.hpp"
#include "lpmc/lpm.hpp"

namespace lpmc {

template <typename S>
struct ForwardOutput {
  Tensor<S> y, z;
  Tensor<S> y_hat, z_hat;    // decoder inputs (noisy in training, dequantized in eval)
  Tensor<S> y_symbols;       // round mode only: clamp(round(y - μ))
  Tensor<S> mu, sigma;
  Tensor<S> y_likelihood, z_likelihood;
  Tensor<S> rate_y, rate_z;  // scalar bits
  Tensor<S> x_hat;           // unclamped, padded extent
  std::vector<double> attention;
};

template <typename S>
struct ForwardOptions {
  QuantMode quant = QuantMode::kRound;
  /// Prompt usage when a PromptSet is supplied; kOff is implied without.
  PromptMode mode = PromptMode::kOn;
  bool record_attention = false;
  /// Fixed noise for kNoise; drawn from the rng when absent.
  const typename Tensor<S>::Array* y_noise = nullptr;
  const typename Tensor<S>::Array* z_noise = nullptr;
};

/// x must already be padded.
template <typename S>
ForwardOutput<S> forward(const Backbone<S>& backbone, PromptSet<S>* prompts, const Tensor<S>& x,
                         const ForwardOptions<S>& opts, Rng& rng);

template <typename S>
struct LossTerms {
  Tensor<S> total;       // bpp + λ·D
  Tensor<S> bpp;         // (R_y + R_z) / (B·H·W)
  Tensor<S> distortion;  // 255²·MSE over [0, 1] pixels
};

template <typename S>
LossTerms<S> rd_loss(const ForwardOutput<S>& f, const Tensor<S>& x, double lambda);

/// Replicate-pads the spatial extent up to a multiple of `multiple`.
template <typename S> Tensor<S> pad_to_multiple(const Tensor<S>& x, Index multiple);
template <typename S> Tensor<S> crop(const Tensor<S>& x, Index height, Index width);

/// Quantized CDF tables derived from a backbone's entropy parameters.
struct CodingTables {
  std::vector<CdfTable> z;       // one per hyperlatent channel
  std::vector<CdfTable> y;       // one per scale bucket
  std::vector<double> scales;    // bucket centres, ascending

  /// Smallest bucket whose scale is ≥ sigma (the last for larger σ).
  int bucket(double sigma) const;
};

inline constexpr int kScaleBuckets = 64;
inline constexpr double kScaleMax = 256.0;

template <typename S> CodingTables build_tables(const Backbone<S>& backbone);

struct CodingStats {
  double z_bits_estimate = 0;  // Σ −log₂ of quantized table probabilities
  double y_bits_estimate = 0;
  std::size_t z_symbols = 0, y_symbols = 0;
};

/// Encodes one unpadded image [1, 3, H, W]. `prompts` may be null for the
/// bare backbone.
template <typename S>
Bitstream compress(const Backbone<S>& backbone, const CodingTables& tables, PromptSet<S>* prompts,
                   const Tensor<S>& image, CodingStats* stats = nullptr,
                   ForwardOutput<S>* trace = nullptr);

/// Returns the unclamped reconstruction at padded extent. The caller
/// supplies the PromptSet matching the stream's lambda_id (or null for
/// the bare backbone). Throws CorruptStream / ModelMismatch.
template <typename S>
Tensor<S> decompress(const Backbone<S>& backbone, const CodingTables& tables, PromptSet<S>* prompts,
                     const Bitstream& stream);

}  // namespace lpmc

#endif  // LPMC_CODEC_HPP_
