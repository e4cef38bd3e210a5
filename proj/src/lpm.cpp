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

#include "lpmc/lpm.hpp"

#include <cmath>

namespace lpmc {
namespace {

template <typename S>
Tensor<S> kaiming_conv(Index out, Index in, Index k, Rng& rng) {
  return init::kaiming<S>({out, in, k, k}, in * k * k, rng);
}

template <typename S>
void add_bn(ParamStore<S>& store, const std::string& name, Index c) {
  store.add(name + ".g", Tensor<S>::full({c}, S(1)));
  store.add(name + ".b", Tensor<S>::zeros({c}));
  store.add(name + ".mean", Tensor<S>::zeros({c}), false);
  store.add(name + ".var", Tensor<S>::full({c}, S(1)), false);
}

template <typename S>
int depth(const ModelConfig& cfg, Side side, int stage) {
  const auto& d = side == Side::kEncoder ? cfg.enc_depths : cfg.dec_depths;
  return d[static_cast<std::size_t>(stage)];
}

}  // namespace

template <typename S>
PromptSet<S>::PromptSet(const ModelConfig& cfg, int lambda_id, double lambda, std::uint64_t seed)
    : cfg_(cfg), lambda_id_(lambda_id), lambda_(lambda) {
  cfg_.validate();
  Rng rng(seed);
  const Index e = cfg_.epg_channels, m = cfg_.latent_channels;
  params_.add("epg.c1.w", kaiming_conv<S>(e, 3, 3, rng));
  add_bn(params_, "epg.bn1", e);
  params_.add("epg.c2.w", kaiming_conv<S>(e, e, 3, rng));
  add_bn(params_, "epg.bn2", e);
  params_.add("epg.up.w", init::kaiming<S>({e, e, 4, 4}, e * 4, rng));
  params_.add("epg.up.b", Tensor<S>::zeros({e}));
  params_.add("epg.out.w", Tensor<S>::zeros({1, e, 1, 1}));
  params_.add("epg.out.b", Tensor<S>::zeros({1}));
  for (int s = 0; s < cfg_.stages; ++s) {
    const Index in = s == 0 ? 1 : cfg_.widths[static_cast<std::size_t>(s - 1)];
    const Index out = cfg_.widths[static_cast<std::size_t>(s)];
    params_.add("enc.p" + std::to_string(s) + ".w", kaiming_conv<S>(out, in, 2, rng));
  }
  params_.add("dpg.w", Tensor<S>::zeros({m, m, 3, 3}));
  params_.add("dpg.b", Tensor<S>::zeros({m}));
  for (int s = 0; s < cfg_.stages; ++s) {
    const Index out = cfg_.dec_width(s);
    if (s == 0) {
      params_.add("dec.p0.w", kaiming_conv<S>(out, m, 2, rng));
    } else {
      const Index in = cfg_.dec_width(s - 1);
      params_.add("dec.p" + std::to_string(s) + ".w", init::kaiming<S>({in, out, 2, 2}, in, rng));
    }
  }
}

template <typename S>
PromptSet<S>::PromptSet(const ModelConfig& cfg, int lambda_id, double lambda, ParamStore<S> params)
    : cfg_(cfg), lambda_id_(lambda_id), lambda_(lambda), params_(std::move(params)) {
  cfg_.validate();
  const PromptSet<S> ref(cfg_, lambda_id, lambda, 0);
  const auto& want = ref.params().entries();
  const auto& have = params_.entries();
  bool ok = want.size() == have.size();
  for (std::size_t i = 0; ok && i < want.size(); ++i) {
    ok = want[i].name == have[i].name && want[i].tensor.shape() == have[i].tensor.shape() &&
         want[i].trainable == have[i].trainable;
  }
  if (!ok) throw std::invalid_argument("promptset: tensor table does not match the model config");
}

template <typename S>
Tensor<S> PromptSet<S>::epg_forward(const T& x) {
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw_shape("epg_forward", "expects padded [B, 3, H, W], got " + shape_str(x.shape()));
  }
  const T none;
  auto block = [&](const T& in, const std::string& conv, const std::string& bn) {
    BatchNormStats<S> stats{params_.get(bn + ".mean"), params_.get(bn + ".var")};
    T h = conv2d(in, params_.get(conv + ".w"), none, 1, 1);
    h = batch_norm(h, params_.get(bn + ".g"), params_.get(bn + ".b"), stats, training_);
    return leaky_relu(h);
  };
  T h = block(x, "epg.c1", "epg.bn1");
  h = maxpool2d(h, 2, 2, 0);
  h = block(h, "epg.c2", "epg.bn2");
  h = maxpool2d(h, 2, 2, 0);
  h = leaky_relu(deconv2d(h, params_.get("epg.up.w"), params_.get("epg.up.b"), 2, 1));
  return conv2d(h, params_.get("epg.out.w"), params_.get("epg.out.b"), 1, 0);
}

template <typename S>
Tensor<S> PromptSet<S>::dpg_forward(const T& y_hat) const {
  return conv2d(y_hat, params_.get("dpg.w"), params_.get("dpg.b"), 1, 1);
}

template <typename S>
Tensor<S> PromptSet<S>::stage_transform(const T& prev, Side side, int stage) const {
  if (stage < 0 || stage >= cfg_.stages) {
    throw std::out_of_range("stage_transform: stage " + std::to_string(stage) + " out of range");
  }
  const T none;
  if (side == Side::kEncoder) return conv2d(prev, params_.get("enc.p" + std::to_string(stage) + ".w"), none, 2, 0);
  const T& w = params_.get("dec.p" + std::to_string(stage) + ".w");
  return stage == 0 ? conv2d(prev, w, none, 2, 0) : deconv2d(prev, w, none, 2, 0);
}

template <typename S>
std::vector<Tensor<S>> layer_adapt(const Tensor<S>& p_stage, int layers) {
  std::vector<Tensor<S>> out;
  Tensor<S> p = p_stage;
  for (int l = 0; l < layers; ++l) {
    p = maxpool2d(p, 3, 1, 1);
    out.push_back(to_tokens(p));
  }
  return out;
}

template <typename S>
PromptGrids<S> PromptSet<S>::encoder_prompts(const T& x) {
  PromptGrids<S> grids;
  T p = epg_forward(x);
  for (int s = 0; s < cfg_.stages; ++s) {
    p = stage_transform(p, Side::kEncoder, s);
    grids.push_back(layer_adapt(p, depth<S>(cfg_, Side::kEncoder, s)));
  }
  return grids;
}

template <typename S>
PromptGrids<S> PromptSet<S>::decoder_prompts(const T& y_hat) const {
  PromptGrids<S> grids;
  T p = dpg_forward(y_hat);
  for (int s = 0; s < cfg_.stages; ++s) {
    p = stage_transform(p, Side::kDecoder, s);
    grids.push_back(layer_adapt(p, depth<S>(cfg_, Side::kDecoder, s)));
  }
  return grids;
}

template <typename S>
std::pair<PromptGrids<S>, PromptGrids<S>> build_prompt_sets(const Tensor<S>& x, const Tensor<S>& y_hat,
                                                            PromptSet<S>& set) {
  return {set.encoder_prompts(x), set.decoder_prompts(y_hat)};
}

#define LPMC_INSTANTIATE(S)                                                                   \
  template class PromptSet<S>;                                                               \
  template std::vector<Tensor<S>> layer_adapt(const Tensor<S>&, int);                        \
  template std::pair<PromptGrids<S>, PromptGrids<S>> build_prompt_sets(const Tensor<S>&,     \
                                                                       const Tensor<S>&,     \
                                                                       PromptSet<S>&);

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
