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

#ifndef LPMC_CONFIG_HPP_
#define LPMC_CONFIG_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpmc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Architecture hyperparameters. Every tensor shape in the codec is a
/// function of these and the padded input extent.
struct ModelConfig {
  int stages = 4;
  std::vector<int> widths{48, 64, 80, 96};
  std::vector<int> enc_depths{1, 1, 2, 1};
  std::vector<int> dec_depths{1, 2, 1, 1};
  int window = 4;
  int latent_channels = 96;
  int hyper_channels = 64;
  int hyper_depth = 2;
  int pad_multiple = 64;
  int head_dim = 16;
  int mlp_ratio = 2;
  int epg_channels = 16;

  /// Decoder stage widths run the encoder's in reverse.
  int dec_width(int stage) const { return widths[static_cast<std::size_t>(stages - 1 - stage)]; }
  int heads(int width) const { return width / head_dim; }
  /// Total spatial reduction from the image to the hyperlatent.
  int reduction() const { return 1 << (stages + hyper_depth); }

  void validate() const;
  /// Sorted key=value lines; input to model_id().
  std::string canonical() const;
  std::uint32_t model_id() const;

  /// Desk-scale default.
  static ModelConfig desk() { return {}; }
  /// Configuration used for the full-scale parameter accounting.
  static ModelConfig full_scale();
};

struct TrainConfig {
  std::vector<double> lambdas{0.0018, 0.0035, 0.013, 0.025, 0.0483};
  double lambda0 = 0.0067;
  double lr = 1e-4;
  // Stage-2 learning rate; 0 reuses lr.
  double stage2_lr = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 12;
  // Stage-2 batch size; 0 reuses batch_size.
  int stage2_batch_size = 0;
  int stage1_epochs = 400;
  int stage2_epochs = 50;
  // Nonzero step counts take precedence over epochs.
  int stage1_steps = 0;
  int stage2_steps = 0;
  int crop = 256;
  std::uint64_t seed = 0;
  std::string precision = "float";
  int checkpoint_every = 0;
  int log_every = 1;

  int batch(int stage) const { return stage == 2 && stage2_batch_size > 0 ? stage2_batch_size : batch_size; }
  double learning_rate(int stage) const { return stage == 2 && stage2_lr > 0 ? stage2_lr : lr; }

  void validate() const;
};

struct PathConfig {
  std::string dataset;
  std::string backbone = "backbone.lpmk";
  std::string promptset_dir = ".";
  std::string metrics_log = "metrics.csv";
  std::string out_dir = ".";
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  PathConfig paths;

  /// Parses "key = value" lines; '#' starts a comment. Unknown keys and
  /// malformed values throw ConfigError.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string canonical() const;
};

/// 32-bit FNV-1a.
std::uint32_t fnv1a32(const std::string& s);

}  // namespace lpmc

#endif  // LPMC_CONFIG_HPP_
