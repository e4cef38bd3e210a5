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

#include "lpmc/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace lpmc {
namespace {

namespace fs = std::filesystem;

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void bytes(const std::uint8_t* p, std::size_t n) { out.insert(out.end(), p, p + n); }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    u32(bits);
  }
  std::vector<std::uint8_t> out;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, const char* what) : b_(b), what_(what) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> v(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (remaining() < n) throw FormatError(std::string(what_) + ": truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& b_;
  const char* what_;
  std::size_t pos_ = 0;
};

void expect_magic(Reader& r, const char* magic, const char* what) {
  const auto m = r.bytes(4);
  if (std::memcmp(m.data(), magic, 4) != 0) throw FormatError(std::string(what) + ": bad magic");
}

}  // namespace

std::vector<std::uint8_t> Bitstream::serialize() const {
  Writer w;
  w.bytes(reinterpret_cast<const std::uint8_t*>("LPMC"), 4);
  w.u8(version);
  w.u32(model_id);
  w.u8(lambda_id);
  w.u16(width);
  w.u16(height);
  w.u16(padded_width);
  w.u16(padded_height);
  w.u32(static_cast<std::uint32_t>(z.size()));
  w.bytes(z.data(), z.size());
  w.u32(static_cast<std::uint32_t>(y.size()));
  w.bytes(y.data(), y.size());
  return std::move(w.out);
}

namespace {

Bitstream parse_bitstream(const std::vector<std::uint8_t>& bytes, const std::uint32_t* expected) {
  Reader r(bytes, "bitstream");
  expect_magic(r, "LPMC", "bitstream");
  Bitstream b;
  b.version = r.u8();
  if (b.version != kBitstreamVersion) throw FormatError("bitstream: unsupported version " + std::to_string(b.version));
  b.model_id = r.u32();
  if (expected && b.model_id != *expected) {
    throw ModelMismatch("bitstream model-id " + std::to_string(b.model_id) + " does not match configured " +
                        std::to_string(*expected));
  }
  b.lambda_id = r.u8();
  b.width = r.u16();
  b.height = r.u16();
  b.padded_width = r.u16();
  b.padded_height = r.u16();
  if (b.width == 0 || b.height == 0 || b.padded_width < b.width || b.padded_height < b.height) {
    throw FormatError("bitstream: inconsistent dimensions");
  }
  b.z = r.bytes(r.u32());
  b.y = r.bytes(r.u32());
  if (r.remaining() != 0) throw FormatError("bitstream: trailing bytes");
  return b;
}

}  // namespace

Bitstream Bitstream::parse(const std::vector<std::uint8_t>& bytes) { return parse_bitstream(bytes, nullptr); }

Bitstream Bitstream::parse(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_model_id) {
  return parse_bitstream(bytes, &expected_model_id);
}

std::vector<std::uint8_t> serialize_checkpoint(const CheckpointHeader& header, const ParamStore<float>& params) {
  Writer w;
  w.bytes(reinterpret_cast<const std::uint8_t*>("LPMK"), 4);
  w.u8(kCheckpointVersion);
  w.u32(header.model_id);
  w.u8(static_cast<std::uint8_t>(header.kind));
  w.u8(header.lambda_id);
  w.u32(static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& e : params.entries()) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(reinterpret_cast<const std::uint8_t*>(e.name.data()), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.tensor.ndim()));
    for (Index d : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < e.tensor.numel(); ++i) w.f32(e.tensor.value()[i]);
  }
  return std::move(w.out);
}

namespace {

CheckpointHeader read_header(Reader& r, std::uint32_t& count) {
  expect_magic(r, "LPMK", "checkpoint");
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointHeader h;
  h.model_id = r.u32();
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw FormatError("checkpoint: unknown kind " + std::to_string(kind));
  h.kind = static_cast<CheckpointKind>(kind);
  h.lambda_id = r.u8();
  count = r.u32();
  return h;
}

}  // namespace

CheckpointHeader peek_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes, "checkpoint");
  std::uint32_t count = 0;
  return read_header(r, count);
}

CheckpointHeader parse_checkpoint(const std::vector<std::uint8_t>& bytes, ParamStore<float>& into) {
  Reader r(bytes, "checkpoint");
  std::uint32_t count = 0;
  const CheckpointHeader h = read_header(r, count);
  auto& entries = into.entries();
  if (count != entries.size()) {
    throw FormatError("checkpoint: holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(entries.size()));
  }
  for (auto& e : entries) {
    const std::uint16_t len = r.u16();
    const auto name_bytes = r.bytes(len);
    const std::string name(name_bytes.begin(), name_bytes.end());
    if (name != e.name) throw FormatError("checkpoint: found tensor " + name + " where " + e.name + " was expected");
    const std::uint8_t ndim = r.u8();
    Shape shape;
    for (int i = 0; i < ndim; ++i) shape.push_back(static_cast<Index>(r.u32()));
    if (shape != e.tensor.shape()) {
      throw FormatError("checkpoint: " + name + " has shape " + shape_str(shape) + ", expected " +
                        shape_str(e.tensor.shape()));
    }
    for (Index i = 0; i < e.tensor.numel(); ++i) e.tensor.value()[i] = r.f32();
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return h;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto fail = [](const std::string& m) -> void { throw FormatError("ppm: " + m); };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("not a binary P6 file");
  pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> long {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail("malformed header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1 << 20) fail("header value too large");
    }
    return v;
  };
  const long w = number(), h = number(), maxval = number();
  if (w <= 0 || h <= 0) fail("zero extent");
  if (maxval != 255) fail("maxval " + std::to_string(maxval) + " unsupported (only 255)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("malformed header");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() - pos < need) fail("truncated pixel data");
  Image img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                 bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

Image load_ppm(const std::string& path) { return decode_ppm(read_file(path)); }

void save_ppm(const std::string& path, const Image& img) { write_file_atomic(path, encode_ppm(img)); }

std::vector<std::uint8_t> encode_pgm(int width, int height, const std::vector<std::uint8_t>& gray) {
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), gray.begin(), gray.end());
  return out;
}

template <typename S>
Tensor<S> image_to_tensor(const Image& img) {
  const Index h = img.height, w = img.width;
  typename Tensor<S>::Array v(3 * h * w);
  for (Index c = 0; c < 3; ++c) {
    for (Index i = 0; i < h * w; ++i) {
      v[c * h * w + i] = static_cast<S>(img.rgb[static_cast<std::size_t>(i * 3 + c)]) / S(255);
    }
  }
  return Tensor<S>({1, 3, h, w}, std::move(v));
}

template <typename S>
Image tensor_to_image(const Tensor<S>& x) {
  if (x.ndim() != 4 || x.dim(0) != 1 || x.dim(1) != 3) throw_shape("tensor_to_image", shape_str(x.shape()));
  Image img;
  img.height = static_cast<int>(x.dim(2));
  img.width = static_cast<int>(x.dim(3));
  const Index hw = x.dim(2) * x.dim(3);
  img.rgb.resize(static_cast<std::size_t>(3 * hw));
  for (Index c = 0; c < 3; ++c) {
    for (Index i = 0; i < hw; ++i) img.rgb[static_cast<std::size_t>(i * 3 + c)] = to_u8(x.value()[c * hw + i]);
  }
  return img;
}

std::vector<std::string> list_images(const std::string& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

template Tensor<float> image_to_tensor<float>(const Image&);
template Tensor<double> image_to_tensor<double>(const Image&);
template Image tensor_to_image<float>(const Tensor<float>&);
template Image tensor_to_image<double>(const Tensor<double>&);

}  // namespace lpmc
