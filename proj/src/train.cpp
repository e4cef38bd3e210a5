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

#include "lpmc/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <sstream>
#include <thread>

namespace lpmc {

template <typename S>
void Adam<S>::step(ParamStore<S>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (auto& e : params.entries()) {
    if (!e.trainable || !e.tensor.requires_grad()) continue;
    auto& value = e.tensor.value();
    const auto& g = e.tensor.grad();
    auto& st = state_[e.name];
    if (st.m.size() != value.size()) {
      st.m.setZero(value.size());
      st.v.setZero(value.size());
    }
    st.m = S(b1_) * st.m + S(1 - b1_) * g;
    st.v = S(b2_) * st.v + S(1 - b2_) * g * g;
    value -= S(lr_ / c1) * st.m / ((st.v / S(c2)).sqrt() + S(eps_));
  }
}

template <typename S>
CropStream<S>::CropStream(std::vector<Image> images, int crop, std::uint64_t seed) : crop_(crop), rng_(seed) {
  if (images.empty()) throw std::invalid_argument("dataset is empty");
  if (crop <= 0) throw std::invalid_argument("crop must be positive");
  for (const auto& img : images) {
    Tensor<S> t = image_to_tensor<S>(img);
    const Index ph = std::max<Index>(0, crop - t.dim(2)), pw = std::max<Index>(0, crop - t.dim(3));
    if (ph || pw) {
      padded_ = true;
      t = pad2d(t, ph, pw, PadMode::kReplicate);
    }
    images_.push_back(std::move(t));
  }
  order_.resize(images_.size());
}

template <typename S>
void CropStream<S>::reshuffle() {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  cursor_ = 0;
  ++epoch_;
}

template <typename S>
Tensor<S> CropStream<S>::next(int batch) {
  if (batch <= 0) throw std::invalid_argument("batch must be positive");
  if (epoch_ < 0 || cursor_ >= order_.size()) reshuffle();
  NoGradGuard guard;
  std::vector<Tensor<S>> crops;
  for (int b = 0; b < batch && cursor_ < order_.size(); ++b, ++cursor_) {
    const Tensor<S>& img = images_[order_[cursor_]];
    const Index top = static_cast<Index>(rng_.below(static_cast<std::uint64_t>(img.dim(2) - crop_ + 1)));
    const Index left = static_cast<Index>(rng_.below(static_cast<std::uint64_t>(img.dim(3) - crop_ + 1)));
    crops.push_back(slice(slice(img, 2, top, crop_), 3, left, crop_));
  }
  return crops.size() == 1 ? crops.front() : concat(crops, 0);
}

Image synth_image(std::uint64_t seed, int width, int height) {
  Rng rng(seed * 0x9E3779B97F4A7C15ull + 0x5851F42D4C957F2Dull);
  constexpr double kPi = 3.14159265358979323846;
  Image img;
  img.width = width;
  img.height = height;
  std::vector<double> px(static_cast<std::size_t>(width * height * 3));
  // Background: two low-frequency waves per channel over a linear ramp.
  double base[3], ramp_x[3], ramp_y[3], amp[3][2], fx[3][2], fy[3][2], ph[3][2];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.8);
    ramp_x[c] = rng.uniform(-0.3, 0.3);
    ramp_y[c] = rng.uniform(-0.3, 0.3);
    for (int k = 0; k < 2; ++k) {
      amp[c][k] = rng.uniform(0.02, 0.12);
      fx[c][k] = rng.uniform(0.5, 3.0);
      fy[c][k] = rng.uniform(0.5, 3.0);
      ph[c][k] = rng.uniform(0, 2 * kPi);
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width, v = static_cast<double>(y) / height;
      for (int c = 0; c < 3; ++c) {
        double s = base[c] + ramp_x[c] * (u - 0.5) + ramp_y[c] * (v - 0.5);
        for (int k = 0; k < 2; ++k) s += amp[c][k] * std::sin(2 * kPi * (fx[c][k] * u + fy[c][k] * v) + ph[c][k]);
        px[static_cast<std::size_t>((y * width + x) * 3 + c)] = s;
      }
    }
  }
  // Flat discs and rectangles, many carrying fine stripes.
  const int shapes = 6 + static_cast<int>(rng.below(7));
  for (int i = 0; i < shapes; ++i) {
    const bool disc = rng.uniform() < 0.5;
    const double cx = rng.uniform(0, width), cy = rng.uniform(0, height);
    const double rx = rng.uniform(0.06, 0.25) * width, ry = rng.uniform(0.06, 0.25) * height;
    const bool striped = rng.uniform() < 0.6;
    const double period = rng.uniform(2.0, 5.0), angle = rng.uniform(0, kPi);
    double col[3];
    for (double& c : col) c = rng.uniform(0.0, 1.0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        double mod = 1.0;
        if (striped) {
          const double t = (x * std::cos(angle) + y * std::sin(angle)) / period;
          mod = 0.6 + 0.4 * std::sin(2 * kPi * t);
        }
        for (int c = 0; c < 3; ++c) px[static_cast<std::size_t>((y * width + x) * 3 + c)] = col[c] * mod;
      }
    }
  }
  img.rgb.resize(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) img.rgb[i] = to_u8(px[i] + rng.uniform(-0.03, 0.03));
  return img;
}

long stage_steps(const TrainConfig& c, int stage, std::size_t dataset_size) {
  const long explicit_steps = stage == 1 ? c.stage1_steps : c.stage2_steps;
  if (explicit_steps > 0) return explicit_steps;
  const long per_epoch = static_cast<long>((dataset_size + c.batch(stage) - 1) / c.batch(stage));
  return per_epoch * (stage == 1 ? c.stage1_epochs : c.stage2_epochs);
}

namespace {

template <typename S>
std::vector<LossReport> run(Backbone<S>& backbone, PromptSet<S>* prompts, ParamStore<S>& trained,
                            CropStream<S>& data, const TrainConfig& c, int stage, int lambda_id,
                            double lambda, const TrainHooks& hooks) {
  if (data.padded() && hooks.on_warning) {
    hooks.on_warning("dataset images smaller than the crop were replicate-padded");
  }
  const long steps = stage_steps(c, stage, data.size());
  const std::uint64_t stream = static_cast<std::uint64_t>(stage) * 1000 + static_cast<std::uint64_t>(lambda_id);
  Rng noise(c.seed ^ (0xA24BAED4963EE407ull * (stream + 1)));
  Adam<S> opt(c.learning_rate(stage), c.beta1, c.beta2, c.adam_eps);
  ForwardOptions<S> opts;
  opts.quant = QuantMode::kNoise;
  opts.mode = prompts ? PromptMode::kOn : PromptMode::kOff;

  std::vector<LossReport> log;
  LossReport acc;
  int acc_n = 0;
  long epoch = -1;
  auto flush = [&] {
    if (!acc_n) return;
    acc.loss /= acc_n;
    acc.bpp /= acc_n;
    acc.distortion /= acc_n;
    if (hooks.on_epoch) hooks.on_epoch(acc);
    acc = LossReport{};
    acc_n = 0;
  };
  for (long step = 1; step <= steps; ++step) {
    const Tensor<S> x = data.next(c.batch(stage));
    if (data.epoch() != epoch) {
      flush();
      epoch = data.epoch();
    }
    trained.zero_grad();
    const auto f = forward(backbone, prompts, x, opts, noise);
    const auto terms = rd_loss(f, x, lambda);
    LossReport r{step, stage, lambda_id, lambda, static_cast<double>(terms.total.item()),
                 static_cast<double>(terms.bpp.item()), static_cast<double>(terms.distortion.item())};
    if (!std::isfinite(r.loss)) {
      std::ostringstream msg;
      msg << "stage " << stage << " step " << step << ": non-finite loss (bpp " << r.bpp << ", distortion "
          << r.distortion << ")";
      throw NonFiniteLoss(msg.str());
    }
    backward(terms.total);
    opt.step(trained);
    log.push_back(r);
    if (hooks.on_step) hooks.on_step(r);
    acc.step = step;
    acc.stage = stage;
    acc.lambda_id = lambda_id;
    acc.lambda = lambda;
    acc.loss += r.loss;
    acc.bpp += r.bpp;
    acc.distortion += r.distortion;
    ++acc_n;
    if (c.checkpoint_every > 0 && step % c.checkpoint_every == 0 && hooks.on_checkpoint) hooks.on_checkpoint(step);
  }
  flush();
  return log;
}

}  // namespace

template <typename S>
std::vector<LossReport> train_stage1(Backbone<S>& backbone, CropStream<S>& data, const TrainConfig& c,
                                     const TrainHooks& hooks) {
  backbone.params().set_frozen(false);
  return run<S>(backbone, nullptr, backbone.params(), data, c, 1, kBareLambdaId, c.lambda0, hooks);
}

template <typename S>
std::vector<LossReport> train_stage2(Backbone<S>& backbone, PromptSet<S>& prompts, CropStream<S>& data,
                                     const TrainConfig& c, const TrainHooks& hooks) {
  if (prompts.config().model_id() != backbone.config().model_id()) {
    throw ModelMismatch("prompt set was built for a different model");
  }
  backbone.params().set_frozen(true);
  prompts.set_training(true);
  try {
    auto log = run<S>(backbone, &prompts, prompts.params(), data, c, 2, prompts.lambda_id(), prompts.lambda(), hooks);
    prompts.set_training(false);
    return log;
  } catch (...) {
    prompts.set_training(false);
    throw;
  }
}

template <typename S>
std::vector<RDPoint> rd_sweep(const Backbone<S>& backbone, const CodingTables& tables,
                              const std::vector<PromptSet<S>*>& sets, double lambda0,
                              const std::vector<std::pair<std::string, Image>>& images, int threads) {
  const std::uint32_t id = backbone.config().model_id();
  // Rate points in ascending λ; null is the bare backbone.
  std::vector<std::pair<double, PromptSet<S>*>> points{{lambda0, nullptr}};
  for (PromptSet<S>* s : sets) {
    if (s->config().model_id() != id) {
      throw ModelMismatch("prompt set " + std::to_string(s->lambda_id()) + " was built for a different model");
    }
    if (s->training()) throw std::invalid_argument("rd_sweep: prompt set left in training mode");
    points.emplace_back(s->lambda(), s);
  }
  std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  const std::size_t per_image = points.size();
  std::vector<RDPoint> rows(images.size() * per_image);
  auto work = [&](std::size_t job) {
    const auto& [name, img] = images[job / per_image];
    PromptSet<S>* set = points[job % per_image].second;
    const Tensor<S> x = image_to_tensor<S>(img);
    const Bitstream bs = compress(backbone, tables, set, x);
    const auto bytes = bs.serialize();
    const Tensor<S> x_hat = decompress(backbone, tables, set, Bitstream::parse(bytes, id));
    const Image rec = tensor_to_image(crop(x_hat, img.height, img.width));
    RDPoint& p = rows[job];
    p.image = name;
    p.lambda_id = set ? set->lambda_id() : kBareLambdaId;
    p.bpp = 8.0 * static_cast<double>(bytes.size()) / (static_cast<double>(img.width) * img.height);
    p.psnr = psnr(img, rec);
    p.msssim = ms_ssim(img, rec);
  };
  const std::size_t jobs = rows.size();
  if (threads <= 1 || jobs <= 1) {
    for (std::size_t j = 0; j < jobs; ++j) work(j);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t j; !failed && (j = next++) < jobs;) {
        try {
          work(j);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

int thread_count_from_env() {
  const char* v = std::getenv("LPMC_THREADS");
  int n = 0;
  if (v && *v) {
    char* end = nullptr;
    const long parsed = std::strtol(v, &end, 10);
    if (*end != '\0' || parsed < 0) throw ConfigError("LPMC_THREADS must be a non-negative integer");
    n = static_cast<int>(parsed);
  }
  if (n == 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return n;
}

std::string metrics_log_header() { return "step,stage,lambda_id,loss,bpp,distortion\n"; }

std::string metrics_log_row(const LossReport& r) {
  return std::to_string(r.step) + "," + std::to_string(r.stage) + "," + std::to_string(r.lambda_id) + "," +
         fmt6(r.loss) + "," + fmt6(r.bpp) + "," + fmt6(r.distortion) + "\n";
}

#define LPMC_INSTANTIATE(S)                                                                                   \
  template class Adam<S>;                                                                                    \
  template class CropStream<S>;                                                                              \
  template std::vector<LossReport> train_stage1(Backbone<S>&, CropStream<S>&, const TrainConfig&,            \
                                                const TrainHooks&);                                          \
  template std::vector<LossReport> train_stage2(Backbone<S>&, PromptSet<S>&, CropStream<S>&,                 \
                                                const TrainConfig&, const TrainHooks&);                      \
  template std::vector<RDPoint> rd_sweep(const Backbone<S>&, const CodingTables&,                            \
                                         const std::vector<PromptSet<S>*>&, double,                          \
                                         const std::vector<std::pair<std::string, Image>>&, int);
LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)
#undef LPMC_INSTANTIATE

}  // namespace lpmc
