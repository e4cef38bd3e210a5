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

#include "lpmc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "lpmc/entropy.hpp"

namespace lpmc {
namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size()) {
    throw std::invalid_argument(std::string(what) + ": image extents differ");
  }
}

constexpr double kMsssimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

using Plane = Eigen::ArrayXXd;  // rows = y, cols = x

std::vector<double> gaussian_window() {
  std::vector<double> g(kWindow);
  double total = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kWindowSigma * kWindowSigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-mode filtering.
Plane filter(const Plane& p, const std::vector<double>& g) {
  const Index h = p.rows(), w = p.cols(), k = static_cast<Index>(g.size());
  Plane rows(h, w - k + 1);
  for (Index x = 0; x < w - k + 1; ++x) {
    rows.col(x).setZero();
    for (Index i = 0; i < k; ++i) rows.col(x) += g[static_cast<std::size_t>(i)] * p.col(x + i);
  }
  Plane out(h - k + 1, w - k + 1);
  for (Index y = 0; y < h - k + 1; ++y) {
    out.row(y).setZero();
    for (Index i = 0; i < k; ++i) out.row(y) += g[static_cast<std::size_t>(i)] * rows.row(y + i);
  }
  return out;
}

Plane downsample(const Plane& p) {
  const Index h = p.rows() / 2, w = p.cols() / 2;
  Plane out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      out(y, x) = 0.25 * (p(2 * y, 2 * x) + p(2 * y + 1, 2 * x) + p(2 * y, 2 * x + 1) + p(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

// Mean SSIM and contrast-structure terms for one channel plane.
std::pair<double, double> ssim_terms(const Plane& a, const Plane& b, const std::vector<double>& g) {
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const Plane mu_a = filter(a, g), mu_b = filter(b, g);
  const Plane saa = filter(a * a, g) - mu_a * mu_a;
  const Plane sbb = filter(b * b, g) - mu_b * mu_b;
  const Plane sab = filter(a * b, g) - mu_a * mu_b;
  const Plane cs = (2 * sab + c2) / (saa + sbb + c2);
  const Plane ssim = ((2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)) * cs;
  return {ssim.mean(), cs.mean()};
}

std::vector<Plane> planes(const Image& img) {
  std::vector<Plane> out(3, Plane(img.height, img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out[static_cast<std::size_t>(c)](y, x) = img.rgb[static_cast<std::size_t>((y * img.width + x) * 3 + c)];
      }
    }
  }
  return out;
}

double polyint(const std::vector<double>& c, double x) {
  double acc = 0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i] / static_cast<double>(i + 1);
  return acc * x;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
    se += d * d;
  }
  if (se == 0) return kPsnrCap;
  const double mse = se / static_cast<double>(a.rgb.size());
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

int ms_ssim_scales(int height, int width) {
  const int edge = std::min(height, width);
  int scales = 0;
  // The coarsest plane, after floor halving, must still hold the window.
  while (scales < 5 && edge >= 11 * (1 << scales)) ++scales;
  if (scales == 0) throw std::invalid_argument("ms_ssim: image smaller than the 11x11 window");
  return scales;
}

double ms_ssim(const Image& a, const Image& b) {
  require_same(a, b, "ms_ssim");
  const int scales = ms_ssim_scales(a.height, a.width);
  double wsum = 0;
  for (int i = 0; i < scales; ++i) wsum += kMsssimWeights[i];
  const auto g = gaussian_window();
  auto pa = planes(a), pb = planes(b);
  double result = 1.0;
  for (int s = 0; s < scales; ++s) {
    double ssim = 0, cs = 0;
    for (int c = 0; c < 3; ++c) {
      const auto [sv, cv] = ssim_terms(pa[static_cast<std::size_t>(c)], pb[static_cast<std::size_t>(c)], g);
      ssim += sv / 3;
      cs += cv / 3;
    }
    const double term = s + 1 == scales ? ssim : cs;
    result *= std::pow(std::max(term, 0.0), kMsssimWeights[s] / wsum);
    if (s + 1 < scales) {
      for (auto& p : pa) p = downsample(p);
      for (auto& p : pb) p = downsample(p);
    }
  }
  return result;
}

std::vector<double> fit_cubic(const std::vector<double>& q, const std::vector<double>& v) {
  const Index n = static_cast<Index>(q.size());
  if (n < 4 || v.size() != q.size()) throw std::invalid_argument("fit_cubic: need at least 4 matching points");
  // Centre and scale the abscissa for conditioning, then expand back.
  double lo = *std::min_element(q.begin(), q.end()), hi = *std::max_element(q.begin(), q.end());
  const double mid = 0.5 * (lo + hi), half = hi > lo ? 0.5 * (hi - lo) : 1.0;
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd rhs(n);
  for (Index i = 0; i < n; ++i) {
    const double t = (q[static_cast<std::size_t>(i)] - mid) / half;
    a(i, 0) = 1;
    a(i, 1) = t;
    a(i, 2) = t * t;
    a(i, 3) = t * t * t;
    rhs[i] = v[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd d = a.colPivHouseholderQr().solve(rhs);
  // p(q) = Σ d_k ((q − mid)/half)^k, expanded into powers of q.
  std::vector<double> c(4, 0.0);
  for (int k = 0; k < 4; ++k) {
    const double scale = d[k] / std::pow(half, k);
    for (int j = 0; j <= k; ++j) {
      double binom = 1;
      for (int t = 0; t < j; ++t) binom = binom * (k - t) / (t + 1);
      c[static_cast<std::size_t>(j)] += scale * binom * std::pow(-mid, k - j);
    }
  }
  return c;
}

double bd_rate(const std::vector<RDSample>& test, const std::vector<RDSample>& anchor) {
  if (test.size() < 4 || anchor.size() < 4) throw std::invalid_argument("bd_rate: each curve needs at least 4 points");
  auto split = [](const std::vector<RDSample>& c, std::vector<double>& q, std::vector<double>& r) {
    for (const auto& s : c) {
      if (!(s.rate > 0)) throw std::invalid_argument("bd_rate: rates must be positive");
      q.push_back(s.quality);
      r.push_back(std::log10(s.rate));
    }
  };
  std::vector<double> qt, rt, qa, ra;
  split(test, qt, rt);
  split(anchor, qa, ra);
  const double lo = std::max(*std::min_element(qt.begin(), qt.end()), *std::min_element(qa.begin(), qa.end()));
  const double hi = std::min(*std::max_element(qt.begin(), qt.end()), *std::max_element(qa.begin(), qa.end()));
  if (!(hi > lo)) throw std::invalid_argument("bd_rate: quality ranges do not overlap");
  const auto ct = fit_cubic(qt, rt), ca = fit_cubic(qa, ra);
  const double it = polyint(ct, hi) - polyint(ct, lo);
  const double ia = polyint(ca, hi) - polyint(ca, lo);
  const double avg = (it - ia) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

double HeatMap::mean() const {
  if (values.empty()) return 0;
  double s = 0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

std::vector<std::uint8_t> HeatMap::to_pgm() const {
  const double peak = values.empty() ? 0 : *std::max_element(values.begin(), values.end());
  std::vector<std::uint8_t> gray(values.size(), 0);
  if (peak > 0) {
    for (std::size_t i = 0; i < values.size(); ++i) gray[i] = to_u8(values[i] / peak);
  }
  return encode_pgm(width, height, gray);
}

std::string HeatMap::to_csv() const {
  std::string out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (x) out += ',';
      out += fmt6(values[static_cast<std::size_t>(y * width + x)]);
    }
    out += '\n';
  }
  return out;
}

template <typename S>
HeatMap bit_allocation_map(const Tensor<S>& likelihood) {
  if (likelihood.ndim() != 4 || likelihood.dim(0) != 1) {
    throw_shape("bit_allocation_map", "expects [1, M, h, w], got " + shape_str(likelihood.shape()));
  }
  const Index m = likelihood.dim(1), h = likelihood.dim(2), w = likelihood.dim(3);
  HeatMap map;
  map.width = static_cast<int>(w);
  map.height = static_cast<int>(h);
  map.values.assign(static_cast<std::size_t>(h * w), 0.0);
  for (Index c = 0; c < m; ++c) {
    for (Index i = 0; i < h * w; ++i) {
      const double p = std::max(static_cast<double>(likelihood.value()[c * h * w + i]), kLikelihoodFloor);
      map.values[static_cast<std::size_t>(i)] += -std::log2(p) / static_cast<double>(m);
    }
  }
  return map;
}

HeatMap attention_map(const std::vector<double>& mass, int grid_h, int grid_w, int out_h, int out_w) {
  if (mass.empty()) throw std::invalid_argument("attention_map: attention recording was not enabled");
  if (mass.size() != static_cast<std::size_t>(grid_h * grid_w) || grid_h <= 0 || grid_w <= 0) {
    throw std::invalid_argument("attention_map: record does not match the token grid");
  }
  HeatMap map;
  map.width = out_w;
  map.height = out_h;
  map.values.resize(static_cast<std::size_t>(out_h * out_w));
  // Token (i, j) covers pixels [i·s, (i+1)·s) with s = padded extent / grid.
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const int gy = std::min(grid_h - 1, y * grid_h / std::max(out_h, grid_h));
      const int gx = std::min(grid_w - 1, x * grid_w / std::max(out_w, grid_w));
      map.values[static_cast<std::size_t>(y * out_w + x)] = mass[static_cast<std::size_t>(gy * grid_w + gx)];
    }
  }
  return map;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string rd_points_csv(const std::vector<RDPoint>& points) {
  std::string out = "image,lambda_id,bpp,psnr,msssim\n";
  for (const auto& p : points) {
    out += p.image + "," + std::to_string(p.lambda_id) + "," + fmt6(p.bpp) + "," + fmt6(p.psnr) + "," +
           fmt6(p.msssim) + "\n";
  }
  return out;
}

std::vector<RDPoint> parse_rd_points_csv(const std::string& text) {
  std::vector<RDPoint> out;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("image,", 0) == 0) continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 5) throw std::invalid_argument("rd_points: malformed row '" + line + "'");
    RDPoint p;
    p.image = f[0];
    p.lambda_id = std::stoi(f[1]);
    p.bpp = std::stod(f[2]);
    p.psnr = std::stod(f[3]);
    p.msssim = std::stod(f[4]);
    out.push_back(p);
  }
  return out;
}

std::vector<RDPoint> average_by_lambda(const std::vector<RDPoint>& points, const std::vector<int>& order) {
  std::vector<RDPoint> out;
  for (int id : order) {
    RDPoint acc;
    acc.image = "mean";
    acc.lambda_id = id;
    int n = 0;
    for (const auto& p : points) {
      if (p.lambda_id != id) continue;
      acc.bpp += p.bpp;
      acc.psnr += p.psnr;
      acc.msssim += p.msssim;
      ++n;
    }
    if (n == 0) continue;
    acc.bpp /= n;
    acc.psnr /= n;
    acc.msssim /= n;
    out.push_back(acc);
  }
  return out;
}

template HeatMap bit_allocation_map<float>(const Tensor<float>&);
template HeatMap bit_allocation_map<double>(const Tensor<double>&);

}  // namespace lpmc
