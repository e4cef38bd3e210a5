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

// File formats. All multi-byte integers are little-endian.
//
// Bitstream ("LPMC"):
//   magic[4] version:u8 model_id:u32 lambda_id:u8
//   width:u16 height:u16 padded_width:u16 padded_height:u16
//   z_len:u32 z[z_len] y_len:u32 y[y_len]
//
// Checkpoint ("LPMK"):
//   magic[4] version:u8 model_id:u32 kind:u8 lambda_id:u8 count:u32
//   count × { name_len:u16 name ndim:u8 dims:u32[ndim] data:f32[prod] }

#ifndef LPMC_IO_HPP_
#define LPMC_IO_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpmc/params.hpp"

namespace lpmc {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header field disagrees with the running configuration.
class ModelMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::uint8_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kBareLambdaId = 0xFF;

struct Bitstream {
  std::uint8_t version = kBitstreamVersion;
  std::uint32_t model_id = 0;
  std::uint8_t lambda_id = kBareLambdaId;
  std::uint16_t width = 0, height = 0;
  std::uint16_t padded_width = 0, padded_height = 0;
  std::vector<std::uint8_t> z, y;

  std::vector<std::uint8_t> serialize() const;
  /// Throws FormatError on bad magic, version or lengths.
  static Bitstream parse(const std::vector<std::uint8_t>& bytes);
  /// Parses and rejects a foreign model id before touching the payloads.
  static Bitstream parse(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_model_id);
  bool operator==(const Bitstream&) const = default;
};

/// Bytes of the fixed header plus both length prefixes.
inline constexpr std::size_t kBitstreamOverhead = 4 + 1 + 4 + 1 + 8 + 4 + 4;

enum class CheckpointKind : std::uint8_t { kBackbone = 0, kPromptSet = 1 };

struct CheckpointHeader {
  std::uint32_t model_id = 0;
  CheckpointKind kind = CheckpointKind::kBackbone;
  std::uint8_t lambda_id = kBareLambdaId;
};

/// Entry order and trainable flags come from `like` on load; names and
/// shapes must match it exactly.
std::vector<std::uint8_t> serialize_checkpoint(const CheckpointHeader& header, const ParamStore<float>& params);
CheckpointHeader parse_checkpoint(const std::vector<std::uint8_t>& bytes, ParamStore<float>& into);
CheckpointHeader peek_checkpoint(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file(const std::string& path);
/// Writes to a sibling temporary and renames over the target.
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::string& path, const std::string& text);

/// 8-bit RGB image, interleaved.
struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Binary PPM (P6, maxval 255) only.
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Image& img);

/// 8-bit grayscale P5.
std::vector<std::uint8_t> encode_pgm(int width, int height, const std::vector<std::uint8_t>& gray);

/// [1, 3, H, W] with values v/255.
template <typename S> Tensor<S> image_to_tensor(const Image& img);
/// Clamps to [0, 1] and rounds to 8 bits.
template <typename S> Image tensor_to_image(const Tensor<S>& x);

/// Round-to-nearest 8-bit quantization used by every metric.
inline std::uint8_t to_u8(double v) {
  const double c = v < 0 ? 0 : (v > 1 ? 1 : v);
  return static_cast<std::uint8_t>(c * 255.0 + 0.5);
}

/// Sorted list of *.ppm files in a directory.
std::vector<std::string> list_images(const std::string& dir);

}  // namespace lpmc

#endif  // LPMC_IO_HPP_
