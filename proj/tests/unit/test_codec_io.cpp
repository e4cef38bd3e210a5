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

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "lpmc/codec.hpp"
#include "lpmc/config.hpp"
#include "lpmc/train.hpp"
#include "support/gradcheck.hpp"

namespace lpmc {
namespace {

using TF = Tensor<float>;
constexpr PromptSet<float>* kBare = nullptr;

std::vector<std::uint8_t> ppm_bytes(const std::string& header, std::size_t pixels) {
  std::vector<std::uint8_t> b(header.begin(), header.end());
  for (std::size_t i = 0; i < pixels * 3; ++i) b.push_back(static_cast<std::uint8_t>(i * 37));
  return b;
}

TEST(Ppm, RoundTripIsByteIdentical) {
  auto bytes = ppm_bytes("P6\n5 3\n255\n", 15);
  EXPECT_EQ(encode_ppm(decode_ppm(bytes)), bytes);
  // Comments and odd whitespace parse; re-encoding normalizes the header.
  auto commented = ppm_bytes("P6 # a comment\n5\t3 255\n", 15);
  Image img = decode_ppm(commented);
  EXPECT_EQ(img.width, 5);
  EXPECT_EQ(encode_ppm(img), bytes);
}

TEST(Ppm, WhitePixelScalesToOne) {
  std::vector<std::uint8_t> b{'P', '6', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 255, 255, 255};
  TF x = image_to_tensor<float>(decode_ppm(b));
  ASSERT_EQ(x.shape(), (Shape{1, 3, 1, 1}));
  EXPECT_TRUE((x.value() == 1.0f).all());
  EXPECT_EQ(tensor_to_image(x).rgb, (std::vector<std::uint8_t>{255, 255, 255}));
}

TEST(Ppm, RejectsMalformedInput) {
  EXPECT_THROW(decode_ppm(ppm_bytes("P6\n2 2\n65535\n", 4)), FormatError);
  EXPECT_THROW(decode_ppm(ppm_bytes("P6\n2 2\n15\n", 4)), FormatError);
  EXPECT_THROW(decode_ppm(ppm_bytes("P3\n2 2\n255\n", 4)), FormatError);
  EXPECT_THROW(decode_ppm(ppm_bytes("P6\n2 x\n255\n", 4)), FormatError);
  EXPECT_THROW(decode_ppm(ppm_bytes("P6\n2 2\n255\n", 3)), FormatError);
  EXPECT_THROW(decode_ppm({}), FormatError);
}

TEST(Ppm, TensorConversionInverts) {
  Rng rng(1);
  Image img{7, 5, {}};
  for (int i = 0; i < 7 * 5 * 3; ++i) img.rgb.push_back(static_cast<std::uint8_t>(rng.below(256)));
  EXPECT_EQ(tensor_to_image(image_to_tensor<double>(img)).rgb, img.rgb);
  EXPECT_EQ(tensor_to_image(image_to_tensor<float>(img)).rgb, img.rgb);
}

Bitstream sample_stream() {
  Bitstream b;
  b.model_id = 0xDEADBEEF;
  b.lambda_id = 3;
  b.width = 300;
  b.height = 17;
  b.padded_width = 320;
  b.padded_height = 64;
  b.z = {1, 2, 3};
  b.y = {9, 8, 7, 6, 5};
  return b;
}

TEST(BitstreamFormat, LayoutAndRoundTrip) {
  Bitstream b = sample_stream();
  auto bytes = b.serialize();
  ASSERT_EQ(bytes.size(), kBitstreamOverhead + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "LPMC");
  EXPECT_EQ(bytes[4], kBitstreamVersion);
  EXPECT_EQ(bytes[5], 0xEF);  // little-endian model id
  EXPECT_EQ(bytes[8], 0xDE);
  EXPECT_EQ(bytes[9], 3);
  EXPECT_EQ(bytes[10] | (bytes[11] << 8), 300);
  EXPECT_EQ(Bitstream::parse(bytes), b);
}

TEST(BitstreamFormat, RejectsForeignAndDamagedStreams) {
  auto bytes = sample_stream().serialize();
  EXPECT_THROW(Bitstream::parse(bytes, 0x12345678), ModelMismatch);
  EXPECT_NO_THROW(Bitstream::parse(bytes, 0xDEADBEEF));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Bitstream::parse(bad), FormatError);
  bad = bytes;
  bad[4] = 99;
  EXPECT_THROW(Bitstream::parse(bad), FormatError);
  EXPECT_THROW(Bitstream::parse(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1)), FormatError);
  bytes.push_back(0);
  EXPECT_THROW(Bitstream::parse(bytes), FormatError);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  ModelConfig cfg;
  Backbone<float> bb(cfg, 5);
  CheckpointHeader h{cfg.model_id(), CheckpointKind::kBackbone, kBareLambdaId};
  auto bytes = serialize_checkpoint(h, bb.params());
  Backbone<float> other(cfg, 6);
  ASSERT_NE(other.params().checksum(), bb.params().checksum());
  CheckpointHeader back = parse_checkpoint(bytes, other.params());
  EXPECT_EQ(back.model_id, h.model_id);
  EXPECT_EQ(back.kind, CheckpointKind::kBackbone);
  EXPECT_EQ(other.params().checksum(), bb.params().checksum());
  EXPECT_EQ(serialize_checkpoint(h, other.params()), bytes);
  EXPECT_EQ(peek_checkpoint(bytes).model_id, cfg.model_id());
}

TEST(Checkpoint, PromptSetRoundTrip) {
  ModelConfig cfg;
  PromptSet<float> set(cfg, 4, 0.0483, 9);
  CheckpointHeader h{cfg.model_id(), CheckpointKind::kPromptSet, 4};
  auto bytes = serialize_checkpoint(h, set.params());
  PromptSet<float> other(cfg, 4, 0.0483, 10);
  EXPECT_EQ(parse_checkpoint(bytes, other.params()).lambda_id, 4);
  EXPECT_EQ(other.params().checksum(), set.params().checksum());
}

TEST(Checkpoint, RejectsMismatchedTables) {
  ModelConfig cfg, small;
  small.widths = {16, 16, 16, 16};
  Backbone<float> bb(cfg, 5);
  auto bytes = serialize_checkpoint({cfg.model_id(), CheckpointKind::kBackbone, kBareLambdaId}, bb.params());
  Backbone<float> wrong(small, 5);
  EXPECT_ANY_THROW(parse_checkpoint(bytes, wrong.params()));
  PromptSet<float> set(cfg, 0, 0.0018, 1);
  EXPECT_ANY_THROW(parse_checkpoint(bytes, set.params()));
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  EXPECT_THROW(parse_checkpoint(cut, bb.params()), FormatError);
}

TEST(Config, ParseAndCanonicalForm) {
  RunConfig rc = RunConfig::parse(
      "# toy run\n"
      "model.widths = 16, 16, 32, 32\n"
      "model.head_dim = 16\n"
      "train.lr = 3e-3   # comment after value\n"
      "train.lambdas = 0.01,0.02\n"
      "paths.dataset = data/train\n");
  EXPECT_EQ(rc.model.widths, (std::vector<int>{16, 16, 32, 32}));
  EXPECT_DOUBLE_EQ(rc.train.lr, 3e-3);
  EXPECT_EQ(rc.train.lambdas.size(), 2u);
  EXPECT_EQ(rc.paths.dataset, "data/train");
  EXPECT_EQ(RunConfig::parse(rc.canonical()).canonical(), rc.canonical());
}

TEST(Config, ModelIdTracksArchitectureOnly) {
  RunConfig a = RunConfig::parse("train.lr = 1e-3\n");
  RunConfig b = RunConfig::parse("train.lr = 5e-4\ntrain.seed = 9\n");
  RunConfig c = RunConfig::parse("model.latent_channels = 64\n");
  EXPECT_EQ(a.model.model_id(), b.model.model_id());
  EXPECT_NE(a.model.model_id(), c.model.model_id());
  EXPECT_EQ(a.model.model_id(), fnv1a32(a.model.canonical()));
  EXPECT_EQ(fnv1a32(""), 0x811C9DC5u);
  EXPECT_EQ(fnv1a32("a"), 0xE40C292Cu);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(RunConfig::parse("model.nope = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("model.window = three\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("model.window = 3\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("just text\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("train.lambdas = 0.1, -2\n"), ConfigError);
}

TEST(Files, AtomicWriteReplacesContent) {
  const auto dir = std::filesystem::temp_directory_path() / "lpmc_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "blob.bin").string();
  write_file_atomic(path, {1, 2, 3});
  write_file_atomic(path, {4, 5});
  EXPECT_EQ(read_file(path), (std::vector<std::uint8_t>{4, 5}));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);
  EXPECT_THROW(read_file((dir / "missing").string()), std::runtime_error);
  std::filesystem::remove_all(dir);
}

// ----- Codec ---------------------------------------------------------------------

class Codec : public ::testing::Test {
 protected:
  ModelConfig cfg;
  Backbone<float> bb{cfg, 17};
  CodingTables tables = build_tables(bb);
};

TEST_F(Codec, TablesCoverSupport) {
  ASSERT_EQ(tables.z.size(), static_cast<std::size_t>(cfg.hyper_channels));
  ASSERT_EQ(tables.y.size(), static_cast<std::size_t>(kScaleBuckets));
  EXPECT_DOUBLE_EQ(tables.scales.front(), kScaleMin);
  EXPECT_NEAR(tables.scales.back(), kScaleMax, 1e-9);
  for (const auto& t : tables.y) EXPECT_EQ(t.size(), static_cast<std::size_t>(kSymbolMax - kSymbolMin + 2));
  EXPECT_EQ(tables.bucket(kScaleMin), 0);
  EXPECT_EQ(tables.bucket(0.5 * (tables.scales[3] + tables.scales[4])), 4);
  EXPECT_EQ(tables.bucket(tables.scales[4]), 4);
  EXPECT_EQ(tables.bucket(1e6), kScaleBuckets - 1);
}

TEST_F(Codec, DecodeMatchesInProcessForward) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    TF x = image_to_tensor<float>(synth_image(seed, 56, 40));
    PromptSet<float> set(cfg, 2, 0.013, seed + 40);
    for (PromptSet<float>* p : {static_cast<PromptSet<float>*>(nullptr), &set}) {
      ForwardOutput<float> trace;
      CodingStats stats;
      Bitstream b = compress(bb, tables, p, x, &stats, &trace);
      EXPECT_EQ(b.width, 56);
      EXPECT_EQ(b.padded_width, 64);
      auto bytes = b.serialize();
      // File-size bpp equals the header plus payload accounting exactly.
      EXPECT_EQ(bytes.size(), kBitstreamOverhead + b.z.size() + b.y.size());
      TF xr = decompress(bb, tables, p, Bitstream::parse(bytes, cfg.model_id()));
      ASSERT_EQ(xr.shape(), trace.x_hat.shape());
      EXPECT_TRUE((xr.value() == trace.x_hat.value()).all());
      const double est = stats.z_bits_estimate + stats.y_bits_estimate;
      const double measured = 8.0 * static_cast<double>(b.z.size() + b.y.size());
      EXPECT_LE(std::abs(measured - est), 0.01 * est + 64);
    }
  }
}

TEST_F(Codec, WrongPromptSetOrModelRejected) {
  TF x = image_to_tensor<float>(synth_image(1, 64, 64));
  PromptSet<float> set(cfg, 2, 0.013, 1), other(cfg, 3, 0.025, 2);
  Bitstream b = compress(bb, tables, &set, x);
  EXPECT_ANY_THROW(decompress(bb, tables, &other, b));
  EXPECT_ANY_THROW(decompress(bb, tables, kBare, b));
  b.model_id ^= 1;
  EXPECT_THROW(decompress(bb, tables, &set, b), ModelMismatch);
}

TEST_F(Codec, CorruptPayloadDetected) {
  TF x = image_to_tensor<float>(synth_image(2, 64, 64));
  Bitstream b = compress(bb, tables, kBare, x);
  Bitstream cut = b;
  cut.y.resize(cut.y.size() / 2);
  EXPECT_THROW(decompress(bb, tables, kBare, cut), CorruptStream);
  Bitstream odd = b;
  odd.padded_width = 65;
  EXPECT_THROW(decompress(bb, tables, kBare, odd), FormatError);
}

TEST(Loss, DecomposesExactly) {
  ModelConfig cfg;
  Backbone<double> bb(cfg, 3);
  Rng rng(4);
  Tensor<double> x = image_to_tensor<double>(synth_image(5, 64, 64));
  ForwardOptions<double> opts;
  opts.quant = QuantMode::kNoise;
  auto f = forward(bb, static_cast<PromptSet<double>*>(nullptr), x, opts, rng);
  for (double lambda : {0.0018, 0.0067, 0.0483}) {
    auto terms = rd_loss(f, x, lambda);
    // No hidden terms: rebuilding the sum in the same order is exact.
    EXPECT_EQ(terms.total.item(), terms.bpp.item() + lambda * terms.distortion.item());
    EXPECT_DOUBLE_EQ(terms.bpp.item(), (f.rate_y.item() + f.rate_z.item()) / (64.0 * 64.0));
    const double mse = (f.x_hat.value() - x.value()).square().mean();
    EXPECT_NEAR(terms.distortion.item(), 255.0 * 255.0 * mse, 1e-9 * terms.distortion.item());
  }
  // A perfect reconstruction leaves only the rate term.
  ForwardOutput<double> perfect = f;
  perfect.x_hat = x;
  auto terms = rd_loss(perfect, x, 0.0067);
  EXPECT_EQ(terms.distortion.item(), 0.0);
  EXPECT_EQ(terms.total.item(), terms.bpp.item());
}

TEST(Padding, ReplicatesEdgesAndCrops) {
  Rng rng(6);
  Tensor<double> x = testing::random_tensor({1, 3, 5, 7}, rng);
  Tensor<double> p = pad_to_multiple(x, 4);
  ASSERT_EQ(p.shape(), (Shape{1, 3, 8, 8}));
  EXPECT_EQ(p.value()[(0 * 8 + 7) * 8 + 7], x.value()[4 * 7 + 6]);
  EXPECT_TRUE((crop(p, 5, 7).value() == x.value()).all());
  EXPECT_EQ(pad_to_multiple(p, 4).shape(), p.shape());
}

}  // namespace
}  // namespace lpmc
