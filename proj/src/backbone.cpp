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

#include "lpmc/backbone.hpp"

#include <cmath>

#include "lpmc/entropy.hpp"

namespace lpmc {
namespace {

// Conv weights draw from N(0, 1/fan_in); biases start at zero.
template <typename S>
void add_conv(ParamStore<S>& store, const std::string& name, Index out, Index in, Index k, Rng& rng) {
  store.add(name + ".w", init::normal<S>({out, in, k, k}, std::sqrt(1.0 / static_cast<double>(in * k * k)), rng));
  store.add(name + ".b", Tensor<S>::zeros({out}));
}

template <typename S>
void add_deconv(ParamStore<S>& store, const std::string& name, Index in, Index out, Index k, Index stride,
                Rng& rng) {
  const double fan_in = static_cast<double>(in * k * k) / static_cast<double>(stride * stride);
  store.add(name + ".w", init::normal<S>({in, out, k, k}, std::sqrt(1.0 / fan_in), rng));
  store.add(name + ".b", Tensor<S>::zeros({out}));
}

const char* side_tag(Side side) { return side == Side::kEncoder ? "enc" : "dec"; }

int depth(const ModelConfig& cfg, Side side, int stage) {
  const auto& d = side == Side::kEncoder ? cfg.enc_depths : cfg.dec_depths;
  return d[static_cast<std::size_t>(stage)];
}

int width(const ModelConfig& cfg, Side side, int stage) {
  return side == Side::kEncoder ? cfg.widths[static_cast<std::size_t>(stage)] : cfg.dec_width(stage);
}

constexpr double kAttentionInitStd = 0.02;

}  // namespace

std::string stl_prefix(Side side, int stage, int layer) {
  return std::string(side_tag(side)) + ".s" + std::to_string(stage) + ".l" + std::to_string(layer);
}

template <typename S>
void init_stl(ParamStore<S>& store, const std::string& prefix, Index width, Index heads, Index window,
              Index mlp_ratio, Rng& rng) {
  const Index span = 2 * window - 1;
  const Index hidden = width * mlp_ratio;
  store.add(prefix + ".ln1.g", Tensor<S>::full({width}, S(1)));
  store.add(prefix + ".ln1.b", Tensor<S>::zeros({width}));
  store.add(prefix + ".attn.wq", init::normal<S>({width, width}, kAttentionInitStd, rng));
  store.add(prefix + ".attn.wk", init::normal<S>({width, width}, kAttentionInitStd, rng));
  store.add(prefix + ".attn.wv", init::normal<S>({width, width}, kAttentionInitStd, rng));
  store.add(prefix + ".attn.wo", init::normal<S>({width, width}, kAttentionInitStd, rng));
  store.add(prefix + ".attn.bo", Tensor<S>::zeros({width}));
  store.add(prefix + ".attn.rel", init::normal<S>({span * span, heads}, kAttentionInitStd, rng));
  store.add(prefix + ".ln2.g", Tensor<S>::full({width}, S(1)));
  store.add(prefix + ".ln2.b", Tensor<S>::zeros({width}));
  store.add(prefix + ".mlp.w1", init::normal<S>({width, hidden}, kAttentionInitStd, rng));
  store.add(prefix + ".mlp.b1", Tensor<S>::zeros({hidden}));
  store.add(prefix + ".mlp.w2", init::normal<S>({hidden, width}, kAttentionInitStd, rng));
  store.add(prefix + ".mlp.b2", Tensor<S>::zeros({width}));
}

template <typename S>
StlParams<S> stl_params(const ParamStore<S>& store, const std::string& prefix, Index heads, Index window) {
  StlParams<S> p;
  p.ln1_g = store.get(prefix + ".ln1.g");
  p.ln1_b = store.get(prefix + ".ln1.b");
  p.attn.wq = store.get(prefix + ".attn.wq");
  p.attn.wk = store.get(prefix + ".attn.wk");
  p.attn.wv = store.get(prefix + ".attn.wv");
  p.attn.wo = store.get(prefix + ".attn.wo");
  p.attn.bo = store.get(prefix + ".attn.bo");
  p.attn.rel_table = store.get(prefix + ".attn.rel");
  p.attn.heads = heads;
  p.attn.window = window;
  p.ln2_g = store.get(prefix + ".ln2.g");
  p.ln2_b = store.get(prefix + ".ln2.b");
  p.w1 = store.get(prefix + ".mlp.w1");
  p.b1 = store.get(prefix + ".mlp.b1");
  p.w2 = store.get(prefix + ".mlp.w2");
  p.b2 = store.get(prefix + ".mlp.b2");
  return p;
}

template <typename S>
Tensor<S> stl_forward(const Tensor<S>& tokens, const Tensor<S>& prompt, const StlParams<S>& p, bool shifted,
                      PromptMode mode, std::vector<double>* mass) {
  // Prompt tokens enter the layer alongside the image tokens and share
  // its first norm.
  Tensor<S> h = layer_norm(tokens, p.ln1_g, p.ln1_b);
  const Tensor<S> pn = prompt.defined() && mode != PromptMode::kOff ? layer_norm(prompt, p.ln1_g, p.ln1_b) : prompt;
  h = window_attention(h, pn, p.attn, shifted, mode, mass);
  Tensor<S> x = add(tokens, h);
  Tensor<S> m = layer_norm(x, p.ln2_g, p.ln2_b);
  m = linear(gelu(linear(m, p.w1, p.b1)), p.w2, p.b2);
  return add(x, m);
}

template <typename S>
Tensor<S> to_tokens(const Tensor<S>& x) {
  return permute(x, {0, 2, 3, 1});
}

template <typename S>
Tensor<S> to_image(const Tensor<S>& tokens) {
  return permute(tokens, {0, 3, 1, 2});
}

template <typename S>
std::vector<std::string> Backbone<S>::expected_names(const ModelConfig& cfg) {
  Backbone<S> b(cfg, 0);
  std::vector<std::string> names;
  for (const auto& e : b.params().entries()) names.push_back(e.name);
  return names;
}

template <typename S>
Backbone<S>::Backbone(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const Index m = cfg_.latent_channels, hc = cfg_.hyper_channels;
  add_conv(params_, "enc.embed", cfg_.widths[0], 3, 3, rng);
  for (int s = 0; s < cfg_.stages; ++s) {
    const Index w = width(cfg_, Side::kEncoder, s);
    for (int l = 0; l < depth(cfg_, Side::kEncoder, s); ++l) {
      init_stl(params_, stl_prefix(Side::kEncoder, s, l), w, cfg_.heads(static_cast<int>(w)), cfg_.window,
               cfg_.mlp_ratio, rng);
    }
    if (s + 1 < cfg_.stages) {
      add_conv(params_, "enc.down" + std::to_string(s), width(cfg_, Side::kEncoder, s + 1), w, 3, rng);
    }
  }
  add_conv(params_, "enc.out", m, cfg_.widths.back(), 1, rng);

  for (int j = 0; j < cfg_.hyper_depth; ++j) {
    add_conv(params_, "hyper.a" + std::to_string(j), hc, j == 0 ? m : hc, 3, rng);
  }
  for (int j = 0; j < cfg_.hyper_depth; ++j) {
    add_deconv(params_, "hyper.s" + std::to_string(j), hc, j + 1 == cfg_.hyper_depth ? 2 * m : hc, 4, 2, rng);
  }
  init_factorized(params_, "entropy.z", hc, rng);

  add_conv(params_, "dec.in", width(cfg_, Side::kDecoder, 0), m, 1, rng);
  for (int s = 0; s < cfg_.stages; ++s) {
    const Index w = width(cfg_, Side::kDecoder, s);
    for (int l = 0; l < depth(cfg_, Side::kDecoder, s); ++l) {
      init_stl(params_, stl_prefix(Side::kDecoder, s, l), w, cfg_.heads(static_cast<int>(w)), cfg_.window,
               cfg_.mlp_ratio, rng);
    }
    const Index out = s + 1 < cfg_.stages ? width(cfg_, Side::kDecoder, s + 1) : 3;
    add_deconv(params_, s + 1 < cfg_.stages ? "dec.up" + std::to_string(s) : std::string("dec.out"), w, out, 4, 2,
               rng);
  }
}

template <typename S>
Backbone<S>::Backbone(const ModelConfig& cfg, ParamStore<S> params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  const Backbone<S> ref(cfg_, 0);
  const auto& want = ref.params().entries();
  const auto& have = params_.entries();
  if (want.size() != have.size()) {
    throw std::invalid_argument("backbone: expected " + std::to_string(want.size()) + " tensors, got " +
                                std::to_string(have.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].name != have[i].name || want[i].tensor.shape() != have[i].tensor.shape()) {
      throw std::invalid_argument("backbone: tensor " + have[i].name + " " + shape_str(have[i].tensor.shape()) +
                                  " does not match " + want[i].name + " " + shape_str(want[i].tensor.shape()));
    }
  }
}

template <typename S>
StlParams<S> Backbone<S>::stl(Side side, int stage, int layer) const {
  const int w = width(cfg_, side, stage);
  return stl_params(params_, stl_prefix(side, stage, layer), cfg_.heads(w), cfg_.window);
}

template <typename S>
Tensor<S> Backbone<S>::conv(const T& x, const std::string& name, Index stride, Index padding) const {
  return conv2d(x, params_.get(name + ".w"), params_.get(name + ".b"), stride, padding);
}

template <typename S>
Tensor<S> Backbone<S>::deconv(const T& x, const std::string& name, Index stride, Index padding) const {
  return deconv2d(x, params_.get(name + ".w"), params_.get(name + ".b"), stride, padding);
}

template <typename S>
Tensor<S> Backbone<S>::feature_embed(const T& x) const {
  if (x.ndim() != 4 || x.dim(1) != 3) throw_shape("feature_embed", "expects [B, 3, H, W], got " + shape_str(x.shape()));
  if (x.dim(2) % cfg_.pad_multiple != 0 || x.dim(3) % cfg_.pad_multiple != 0) {
    throw_shape("feature_embed", "input " + shape_str(x.shape()) + " is not padded to a multiple of " +
                                     std::to_string(cfg_.pad_multiple));
  }
  return to_tokens(conv(x, "enc.embed", 2, 1));
}

template <typename S>
Tensor<S> Backbone<S>::run_stage(const T& tokens, Side side, int stage, const PromptGrids<S>* prompts,
                                 PromptMode mode, std::vector<double>* attention) const {
  const int layers = depth(cfg_, side, stage);
  if (mode != PromptMode::kOff) {
    if (!prompts || static_cast<int>(prompts->size()) != cfg_.stages ||
        static_cast<int>((*prompts)[static_cast<std::size_t>(stage)].size()) != layers) {
      throw std::invalid_argument(std::string("missing prompt grid for ") + side_tag(side) + " stage " +
                                  std::to_string(stage));
    }
  }
  T x = tokens;
  std::vector<double> mass;
  for (int l = 0; l < layers; ++l) {
    const T prompt = mode != PromptMode::kOff ? (*prompts)[static_cast<std::size_t>(stage)][static_cast<std::size_t>(l)] : T();
    x = stl_forward(x, prompt, stl(side, stage, l), l % 2 == 1, mode, attention ? &mass : nullptr);
    if (attention) {
      if (attention->empty()) attention->assign(mass.size(), 0.0);
      for (std::size_t i = 0; i < mass.size(); ++i) (*attention)[i] += mass[i] / layers;
    }
  }
  return x;
}

template <typename S>
Tensor<S> Backbone<S>::encode_analysis(const T& x, const PromptGrids<S>* prompts, PromptMode mode,
                                       std::vector<double>* attention) const {
  T t = feature_embed(x);
  for (int s = 0; s < cfg_.stages; ++s) {
    const bool last = s + 1 == cfg_.stages;
    if (last && attention) attention->clear();
    t = run_stage(t, Side::kEncoder, s, prompts, mode, last ? attention : nullptr);
    if (!last) t = to_tokens(conv(to_image(t), "enc.down" + std::to_string(s), 2, 1));
  }
  return conv(to_image(t), "enc.out", 1, 0);
}

template <typename S>
Tensor<S> Backbone<S>::hyper_encode(const T& y) const {
  T h = y;
  for (int j = 0; j < cfg_.hyper_depth; ++j) {
    if (j > 0) h = leaky_relu(h);
    h = conv(h, "hyper.a" + std::to_string(j), 2, 1);
  }
  return h;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> Backbone<S>::hyper_decode(const T& z_hat) const {
  T h = z_hat;
  for (int j = 0; j < cfg_.hyper_depth; ++j) {
    if (j > 0) h = leaky_relu(h);
    h = deconv(h, "hyper.s" + std::to_string(j), 2, 1);
  }
  const Index m = cfg_.latent_channels;
  T mu = slice(h, 1, 0, m);
  T sigma = lower_bound(softplus(slice(h, 1, m, m)), static_cast<S>(kScaleMin));
  return {mu, sigma};
}

template <typename S>
Tensor<S> Backbone<S>::decode_synthesis(const T& y_hat, const PromptGrids<S>* prompts, PromptMode mode) const {
  T t = to_tokens(conv(y_hat, "dec.in", 1, 0));
  for (int s = 0; s < cfg_.stages; ++s) {
    t = run_stage(t, Side::kDecoder, s, prompts, mode, nullptr);
    const bool last = s + 1 == cfg_.stages;
    t = deconv(to_image(t), last ? std::string("dec.out") : "dec.up" + std::to_string(s), 2, 1);
    if (!last) t = to_tokens(t);
  }
  return t;
}

#define LPMC_INSTANTIATE(S)                                                                               \
  template void init_stl(ParamStore<S>&, const std::string&, Index, Index, Index, Index, Rng&);          \
  template StlParams<S> stl_params(const ParamStore<S>&, const std::string&, Index, Index);              \
  template Tensor<S> stl_forward(const Tensor<S>&, const Tensor<S>&, const StlParams<S>&, bool, PromptMode, \
                                 std::vector<double>*);                                                   \
  template Tensor<S> to_tokens(const Tensor<S>&);                                                        \
  template Tensor<S> to_image(const Tensor<S>&);                                                         \
  template class Backbone<S>;

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
