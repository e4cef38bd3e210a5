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

// Quantization and the two likelihood models: a per-channel learned
// factorized density for the hyperlatent and a conditional Gaussian for
// the latent. Both integrate their density over unit bins.

#ifndef LPMC_ENTROPY_HPP_
#define LPMC_ENTROPY_HPP_

#include <string>
#include <vector>

#include "lpmc/ops.hpp"
#include "lpmc/params.hpp"

namespace lpmc {

/// Probabilities below this are clamped; it matches the coder's 16-bit
/// frequency resolution.
inline constexpr double kLikelihoodFloor = 1.0 / 65536.0;

/// Coded symbol support.
inline constexpr int kSymbolMin = -128;
inline constexpr int kSymbolMax = 127;

enum class QuantMode { kNoise, kRound };

/// Nearest integer, ties away from zero; straight-through gradient.
template <typename S> Tensor<S> quantize_round(const Tensor<S>& v);
/// v + u for a fixed noise array u; straight-through gradient.
template <typename S>
Tensor<S> quantize_noise(const Tensor<S>& v, const typename Tensor<S>::Array& u);
/// Draws u ~ Uniform[-1/2, 1/2).
template <typename S> typename Tensor<S>::Array uniform_noise(Index n, Rng& rng);
template <typename S> Tensor<S> quantize(const Tensor<S>& v, QuantMode mode, Rng& rng);

/// max(v, bound) whose gradient still flows where it would raise v.
template <typename S> Tensor<S> lower_bound(const Tensor<S>& v, S bound);

/// Standard normal CDF.
double normal_cdf(double x);

/// pmf(v | μ, σ) = Φ((v + ½ − μ)/σ) − Φ((v − ½ − μ)/σ), evaluated in the
/// tail-symmetric form so that both terms stay in the accurate half.
template <typename S>
Tensor<S> gaussian_likelihood(const Tensor<S>& v, const Tensor<S>& mu, const Tensor<S>& sigma);
double gaussian_pmf(double v, double mu, double sigma);

/// Σ −log₂ max(p, kLikelihoodFloor).
template <typename S> Tensor<S> rate_bits(const Tensor<S>& likelihood);

// Factorized density: per channel, a chain of K monotone maps
// l ← softplus(H)·l + b, then l ← l + tanh(a)⊙tanh(l) except after the
// last; the CDF is sigmoid of the final scalar.
inline constexpr int kFactorizedStages = 4;
inline constexpr int kFactorizedFilters[kFactorizedStages + 1] = {1, 3, 3, 3, 1};

template <typename S>
struct FactorizedParams {
  std::vector<Tensor<S>> h;  // [C, f_out, f_in]
  std::vector<Tensor<S>> b;  // [C, f_out]
  std::vector<Tensor<S>> a;  // [C, f_out], one fewer than h
  Index channels() const { return h.empty() ? 0 : h[0].dim(0); }
};

template <typename S>
void init_factorized(ParamStore<S>& store, const std::string& prefix, Index channels, Rng& rng);
template <typename S>
FactorizedParams<S> factorized_params(const ParamStore<S>& store, const std::string& prefix);

/// Likelihood of every element of v [B, C, h, w] under its channel's
/// density. Differentiable in v and in every density parameter.
template <typename S>
Tensor<S> factorized_likelihood(const Tensor<S>& v, const FactorizedParams<S>& p);
/// Non-differentiable CDF logit of channel c at x, in double.
template <typename S>
double factorized_logit(const FactorizedParams<S>& p, Index c, double x);

}  // namespace lpmc

#endif  // LPMC_ENTROPY_HPP_
