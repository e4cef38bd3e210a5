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

#ifndef LPMC_METRICS_HPP_
#define LPMC_METRICS_HPP_

#include <string>
#include <vector>

#include "lpmc/io.hpp"

namespace lpmc {

/// Reported for identical images.
inline constexpr double kPsnrCap = 100.0;

/// PSNR in dB over 8-bit samples.
double psnr(const Image& a, const Image& b);

/// Multi-scale SSIM over 8-bit samples (11×11 Gaussian, σ = 1.5). Uses
/// as many of the five standard scales as the image supports, keeping
/// min(H, W) ≥ 11·2^(scales−1), with the weights renormalized.
double ms_ssim(const Image& a, const Image& b);
int ms_ssim_scales(int height, int width);

struct RDPoint {
  std::string image;
  int lambda_id = 255;
  double bpp = 0, psnr = 0, msssim = 0;
};

/// (rate, quality) samples of one curve.
struct RDSample {
  double rate, quality;
};

/// Bjøntegaard delta rate in percent: negative when `test` needs less
/// rate than `anchor` at equal quality. Classic cubic fit of log₁₀ rate
/// over quality, integrated on the shared quality interval.
double bd_rate(const std::vector<RDSample>& test, const std::vector<RDSample>& anchor);

/// Coefficients c₀..c₃ of the least-squares cubic in quality.
std::vector<double> fit_cubic(const std::vector<double>& q, const std::vector<double>& v);

struct HeatMap {
  int width = 0, height = 0;
  std::vector<double> values;  // row-major

  double mean() const;
  /// Scaled so the maximum maps to 255 (all zero stays zero).
  std::vector<std::uint8_t> to_pgm() const;
  std::string to_csv() const;
};

/// Mean over channels of −log₂ max(p, floor) at each latent location;
/// likelihood is [1, M, h, w].
template <typename S> HeatMap bit_allocation_map(const Tensor<S>& likelihood);

/// Prompt attention mass on the [grid_h, grid_w] token grid, replicated
/// onto an out_h × out_w pixel grid (nearest). Throws when `mass` is
/// empty, meaning recording was off.
HeatMap attention_map(const std::vector<double>& mass, int grid_h, int grid_w, int out_h, int out_w);

/// Fixed six-decimal formatting shared by every CSV writer.
std::string fmt6(double v);

std::string rd_points_csv(const std::vector<RDPoint>& points);
std::vector<RDPoint> parse_rd_points_csv(const std::string& text);
/// Mean bpp / PSNR / MS-SSIM per lambda_id in ascending lambda order.
std::vector<RDPoint> average_by_lambda(const std::vector<RDPoint>& points, const std::vector<int>& order);

}  // namespace lpmc

#endif  // LPMC_METRICS_HPP_
