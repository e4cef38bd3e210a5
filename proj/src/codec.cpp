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

#include "lpmc/codec.hpp"

#include <algorithm>
#include <cmath>

namespace lpmc {
namespace {

// clamp(round(v)) onto the coded support; straight-through gradient.
template <typename S>
Tensor<S> to_symbols(const Tensor<S>& v) {
  using T = Tensor<S>;
  typename T::Array out = v.value().unaryExpr([](S x) {
    return std::clamp(std::round(x), static_cast<S>(kSymbolMin), static_cast<S>(kSymbolMax));
  });
  auto vn = v.node_ptr();
  return T::make_result(v.shape(), std::move(out), {&v},
                        [vn](typename T::Node& o) { vn->grad_buffer() += o.grad; });
}

double factorized_pmf_at(const FactorizedParams<float>* pf, const FactorizedParams<double>* pd, Index c, int s) {
  const double lo = pf ? factorized_logit(*pf, c, s - 0.5) : factorized_logit(*pd, c, s - 0.5);
  const double up = pf ? factorized_logit(*pf, c, s + 0.5) : factorized_logit(*pd, c, s + 0.5);
  const double sign = lo + up > 0 ? -1.0 : 1.0;
  auto sig = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
  return std::fabs(sig(sign * up) - sig(sign * lo));
}

constexpr int kSymbolCount = kSymbolMax - kSymbolMin + 1;

template <typename S>
void encode_latents(const Backbone<S>& backbone, PromptSet<S>* prompts, const Tensor<S>& x,
                    const ForwardOptions<S>& opts, Rng& rng, ForwardOutput<S>& out, PromptMode mode) {
  using T = Tensor<S>;
  PromptGrids<S> enc;
  if (mode != PromptMode::kOff) enc = prompts->encoder_prompts(x);
  out.y = backbone.encode_analysis(x, mode != PromptMode::kOff ? &enc : nullptr, mode,
                                   opts.record_attention ? &out.attention : nullptr);
  out.z = backbone.hyper_encode(out.y);
  const auto density = factorized_params(backbone.params(), "entropy.z");
  if (opts.quant == QuantMode::kNoise) {
    out.z_hat = opts.z_noise ? quantize_noise(out.z, *opts.z_noise)
                             : quantize_noise(out.z, uniform_noise<S>(out.z.numel(), rng));
    out.z_likelihood = factorized_likelihood(out.z_hat, density);
    std::tie(out.mu, out.sigma) = backbone.hyper_decode(out.z_hat);
    out.y_hat = opts.y_noise ? quantize_noise(out.y, *opts.y_noise)
                             : quantize_noise(out.y, uniform_noise<S>(out.y.numel(), rng));
    out.y_likelihood = gaussian_likelihood(out.y_hat, out.mu, out.sigma);
  } else {
    out.z_hat = to_symbols(out.z);
    out.z_likelihood = factorized_likelihood(out.z_hat, density);
    std::tie(out.mu, out.sigma) = backbone.hyper_decode(out.z_hat);
    out.y_symbols = to_symbols(sub(out.y, out.mu));
    out.y_hat = add(out.y_symbols, out.mu);
    out.y_likelihood = gaussian_likelihood(out.y_symbols, T::zeros(out.mu.shape()), out.sigma);
  }
  out.rate_y = rate_bits(out.y_likelihood);
  out.rate_z = rate_bits(out.z_likelihood);
}

}  // namespace

template <typename S>
ForwardOutput<S> forward(const Backbone<S>& backbone, PromptSet<S>* prompts, const Tensor<S>& x,
                         const ForwardOptions<S>& opts, Rng& rng) {
  const PromptMode mode = prompts ? opts.mode : PromptMode::kOff;
  ForwardOutput<S> out;
  encode_latents(backbone, prompts, x, opts, rng, out, mode);
  PromptGrids<S> dec;
  if (mode != PromptMode::kOff) dec = prompts->decoder_prompts(out.y_hat);
  out.x_hat = backbone.decode_synthesis(out.y_hat, mode != PromptMode::kOff ? &dec : nullptr, mode);
  return out;
}

template <typename S>
LossTerms<S> rd_loss(const ForwardOutput<S>& f, const Tensor<S>& x, double lambda) {
  if (f.x_hat.shape() != x.shape()) {
    throw_shape("rd_loss", shape_str(f.x_hat.shape()) + " vs " + shape_str(x.shape()));
  }
  const double pixels = static_cast<double>(x.dim(0) * x.dim(2) * x.dim(3));
  LossTerms<S> t;
  t.bpp = scale(add(f.rate_y, f.rate_z), static_cast<S>(1.0 / pixels));
  t.distortion = scale(mean(square(sub(f.x_hat, x))), static_cast<S>(255.0 * 255.0));
  t.total = add(t.bpp, scale(t.distortion, static_cast<S>(lambda)));
  return t;
}

template <typename S>
Tensor<S> pad_to_multiple(const Tensor<S>& x, Index multiple) {
  const Index ph = (multiple - x.dim(2) % multiple) % multiple;
  const Index pw = (multiple - x.dim(3) % multiple) % multiple;
  if (ph == 0 && pw == 0) return x;
  return pad2d(x, ph, pw, PadMode::kReplicate);
}

template <typename S>
Tensor<S> crop(const Tensor<S>& x, Index height, Index width) {
  if (x.dim(2) == height && x.dim(3) == width) return x;
  return slice(slice(x, 2, 0, height), 3, 0, width);
}

int CodingTables::bucket(double sigma) const {
  const auto it = std::lower_bound(scales.begin(), scales.end(), sigma);
  return it == scales.end() ? static_cast<int>(scales.size()) - 1 : static_cast<int>(it - scales.begin());
}

template <typename S>
CodingTables build_tables(const Backbone<S>& backbone) {
  CodingTables t;
  const auto density = factorized_params(backbone.params(), "entropy.z");
  const FactorizedParams<float>* pf = nullptr;
  const FactorizedParams<double>* pd = nullptr;
  if constexpr (std::is_same_v<S, float>) pf = &density; else pd = &density;
  std::vector<double> pmf(kSymbolCount);
  for (Index c = 0; c < density.channels(); ++c) {
    for (int s = kSymbolMin; s <= kSymbolMax; ++s) pmf[static_cast<std::size_t>(s - kSymbolMin)] = factorized_pmf_at(pf, pd, c, s);
    t.z.push_back(quantize_pmf(pmf));
  }
  const double lo = std::log(kScaleMin), hi = std::log(kScaleMax);
  for (int j = 0; j < kScaleBuckets; ++j) {
    const double sigma = std::exp(lo + (hi - lo) * j / (kScaleBuckets - 1));
    t.scales.push_back(sigma);
    for (int s = kSymbolMin; s <= kSymbolMax; ++s) pmf[static_cast<std::size_t>(s - kSymbolMin)] = gaussian_pmf(s, 0.0, sigma);
    t.y.push_back(quantize_pmf(pmf));
  }
  return t;
}

template <typename S>
Bitstream compress(const Backbone<S>& backbone, const CodingTables& tables, PromptSet<S>* prompts,
                   const Tensor<S>& image, CodingStats* stats, ForwardOutput<S>* trace) {
  NoGradGuard no_grad;
  const ModelConfig& cfg = backbone.config();
  if (image.ndim() != 4 || image.dim(0) != 1 || image.dim(1) != 3) {
    throw_shape("compress", "expects one [1, 3, H, W] image, got " + shape_str(image.shape()));
  }
  const Tensor<S> x = pad_to_multiple(image, cfg.pad_multiple);
  if (x.dim(2) > 0xFFFF || x.dim(3) > 0xFFFF) throw_shape("compress", "image too large for the container");
  Rng rng(0);
  ForwardOptions<S> opts;
  opts.quant = QuantMode::kRound;
  ForwardOutput<S> local;
  ForwardOutput<S>& out = trace ? *trace : local;
  if (trace) {
    out = forward(backbone, prompts, x, opts, rng);
  } else {
    encode_latents(backbone, prompts, x, opts, rng, out, prompts ? PromptMode::kOn : PromptMode::kOff);
  }

  CodingStats st;
  RangeEncoder ez;
  const Index hc = out.z_hat.dim(1), zplane = out.z_hat.dim(2) * out.z_hat.dim(3);
  for (Index i = 0; i < out.z_hat.numel(); ++i) {
    const auto& table = tables.z[static_cast<std::size_t>((i / zplane) % hc)];
    const int index = static_cast<int>(out.z_hat.value()[i]) - kSymbolMin;
    ez.encode(table, index);
    st.z_bits_estimate += table_bits(table, index);
  }
  RangeEncoder ey;
  for (Index i = 0; i < out.y_symbols.numel(); ++i) {
    const auto& table = tables.y[static_cast<std::size_t>(tables.bucket(out.sigma.value()[i]))];
    const int index = static_cast<int>(out.y_symbols.value()[i]) - kSymbolMin;
    ey.encode(table, index);
    st.y_bits_estimate += table_bits(table, index);
  }
  st.z_symbols = static_cast<std::size_t>(out.z_hat.numel());
  st.y_symbols = static_cast<std::size_t>(out.y_symbols.numel());
  if (stats) *stats = st;

  Bitstream b;
  b.model_id = cfg.model_id();
  b.lambda_id = prompts ? static_cast<std::uint8_t>(prompts->lambda_id()) : kBareLambdaId;
  b.width = static_cast<std::uint16_t>(image.dim(3));
  b.height = static_cast<std::uint16_t>(image.dim(2));
  b.padded_width = static_cast<std::uint16_t>(x.dim(3));
  b.padded_height = static_cast<std::uint16_t>(x.dim(2));
  b.z = ez.finish();
  b.y = ey.finish();
  return b;
}

template <typename S>
Tensor<S> decompress(const Backbone<S>& backbone, const CodingTables& tables, PromptSet<S>* prompts,
                     const Bitstream& stream) {
  using T = Tensor<S>;
  NoGradGuard no_grad;
  const ModelConfig& cfg = backbone.config();
  if (stream.model_id != cfg.model_id()) {
    throw ModelMismatch("bitstream model-id " + std::to_string(stream.model_id) + " does not match configured " +
                        std::to_string(cfg.model_id()));
  }
  const bool bare = stream.lambda_id == kBareLambdaId;
  if (bare != (prompts == nullptr) || (prompts && prompts->lambda_id() != stream.lambda_id)) {
    throw std::invalid_argument("decompress: prompt set does not match stream lambda_id " +
                                std::to_string(stream.lambda_id));
  }
  const Index hp = stream.padded_height, wp = stream.padded_width;
  if (hp % cfg.pad_multiple != 0 || wp % cfg.pad_multiple != 0) {
    throw FormatError("bitstream: padded extent is not a multiple of " + std::to_string(cfg.pad_multiple));
  }
  const Index ys = cfg.stages, zs = cfg.stages + cfg.hyper_depth;
  const Index hc = cfg.hyper_channels, m = cfg.latent_channels;

  const Index zh = hp >> zs, zw = wp >> zs;
  typename T::Array zv(hc * zh * zw);
  RangeDecoder dz(stream.z);
  for (Index i = 0; i < zv.size(); ++i) {
    zv[i] = static_cast<S>(dz.decode(tables.z[static_cast<std::size_t>(i / (zh * zw))]) + kSymbolMin);
  }
  dz.finish();
  const T z_hat({1, hc, zh, zw}, std::move(zv));
  const auto [mu, sigma] = backbone.hyper_decode(z_hat);

  const Index yh = hp >> ys, yw = wp >> ys;
  if (mu.shape() != Shape{1, m, yh, yw}) throw FormatError("bitstream: latent shape mismatch");
  typename T::Array yv(mu.numel());
  RangeDecoder dy(stream.y);
  for (Index i = 0; i < yv.size(); ++i) {
    yv[i] = static_cast<S>(dy.decode(tables.y[static_cast<std::size_t>(tables.bucket(sigma.value()[i]))]) + kSymbolMin);
  }
  dy.finish();
  const T y_symbols(mu.shape(), std::move(yv));
  const T y_hat = add(y_symbols, mu);
  PromptGrids<S> dec;
  const PromptMode mode = prompts ? PromptMode::kOn : PromptMode::kOff;
  if (prompts) dec = prompts->decoder_prompts(y_hat);
  return backbone.decode_synthesis(y_hat, prompts ? &dec : nullptr, mode);
}

#define LPMC_INSTANTIATE(S)                                                                              \
  template ForwardOutput<S> forward(const Backbone<S>&, PromptSet<S>*, const Tensor<S>&,                \
                                    const ForwardOptions<S>&, Rng&);                                     \
  template LossTerms<S> rd_loss(const ForwardOutput<S>&, const Tensor<S>&, double);                     \
  template Tensor<S> pad_to_multiple(const Tensor<S>&, Index);                                          \
  template Tensor<S> crop(const Tensor<S>&, Index, Index);                                              \
  template CodingTables build_tables(const Backbone<S>&);                                               \
  template Bitstream compress(const Backbone<S>&, const CodingTables&, PromptSet<S>*, const Tensor<S>&, \
                              CodingStats*, ForwardOutput<S>*);                                          \
  template Tensor<S> decompress(const Backbone<S>&, const CodingTables&, PromptSet<S>*, const Bitstream&);

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
