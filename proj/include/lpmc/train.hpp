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

// Two-stage training. Stage 1 fits the backbone at λ₀ with no prompts;
// stage 2 freezes it and fits one PromptSet per target λ.

#ifndef LPMC_TRAIN_HPP_
#define LPMC_TRAIN_HPP_

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lpmc/codec.hpp"
#include "lpmc/config.hpp"
#include "lpmc/metrics.hpp"

namespace lpmc {

struct LossReport {
  long step = 0;
  int stage = 1;
  int lambda_id = 255;
  double lambda = 0;
  double loss = 0, bpp = 0, distortion = 0;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename S>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  explicit Adam(const TrainConfig& c) : Adam(c.lr, c.beta1, c.beta2, c.adam_eps) {}

  /// One update of every parameter that currently requires grad.
  void step(ParamStore<S>& params);
  long steps() const { return t_; }

 private:
  struct Moments {
    typename Tensor<S>::Array m, v;
  };
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

/// Seeded shuffled crops over an in-memory image list. An epoch is one
/// pass over the images; the final batch of an epoch may be short.
template <typename S>
class CropStream {
 public:
  CropStream(std::vector<Image> images, int crop, std::uint64_t seed);

  std::size_t size() const { return images_.size(); }
  std::size_t batches_per_epoch(int batch) const { return (images_.size() + batch - 1) / batch; }
  /// True once an image smaller than the crop had to be padded.
  bool padded() const { return padded_; }
  long epoch() const { return epoch_; }
  /// [b, 3, crop, crop], b ≤ batch.
  Tensor<S> next(int batch);

 private:
  void reshuffle();

  std::vector<Tensor<S>> images_;
  int crop_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  long epoch_ = -1;
  bool padded_ = false;
};

/// Deterministic test pattern: a smooth gradient under 6 to 12 shapes, most of
/// them striped, plus ±0.03 pixel noise, so the rate responds to λ.
Image synth_image(std::uint64_t seed, int width, int height);

struct TrainHooks {
  std::function<void(const LossReport&)> on_step;
  /// Mean over the steps of one epoch, reported with the epoch's last step.
  std::function<void(const LossReport&)> on_epoch;
  std::function<void(long step)> on_checkpoint;
  std::function<void(const std::string&)> on_warning;
};

long stage_steps(const TrainConfig& c, int stage, std::size_t dataset_size);

/// Stage 1: backbone only, λ₀, prompts off.
template <typename S>
std::vector<LossReport> train_stage1(Backbone<S>& backbone, CropStream<S>& data, const TrainConfig& c,
                                     const TrainHooks& hooks = {});

/// Stage 2: frozen backbone, only the PromptSet moves, at its own λ.
template <typename S>
std::vector<LossReport> train_stage2(Backbone<S>& backbone, PromptSet<S>& prompts, CropStream<S>& data,
                                     const TrainConfig& c, const TrainHooks& hooks = {});

/// One RDPoint per (image, rate point), from real bitstreams. `sets` may
/// be in any order; rows come out per image in ascending λ with the bare
/// backbone at λ₀. `threads` ≤ 1 runs inline.
template <typename S>
std::vector<RDPoint> rd_sweep(const Backbone<S>& backbone, const CodingTables& tables,
                              const std::vector<PromptSet<S>*>& sets, double lambda0,
                              const std::vector<std::pair<std::string, Image>>& images, int threads = 1);

/// LPMC_THREADS: unset or 0 means hardware concurrency.
int thread_count_from_env();

std::string metrics_log_header();
std::string metrics_log_row(const LossReport& r);

}  // namespace lpmc

#endif  // LPMC_TRAIN_HPP_
