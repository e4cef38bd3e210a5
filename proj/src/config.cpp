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

#include "lpmc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace lpmc {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("config: bad value for " + key + ": '" + text + "'");
  }
  return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

#define INT_FIELD(key, member)                                                       \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_number<int>(key, v); }, \
         [](const RunConfig& c) { return std::to_string(c.member); }}}
#define DOUBLE_FIELD(key, member)                                                      \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_number<double>(key, v); }, \
         [](const RunConfig& c) { return fmt_double(c.member); }}}
#define INT_LIST_FIELD(key, member)                                                      \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_list<int>(key, v); }, \
         [](const RunConfig& c) { return join(c.member); }}}
#define STRING_FIELD(key, member)                                            \
  {key, {[](RunConfig& c, const std::string& v) { c.member = v; },          \
         [](const RunConfig& c) { return c.member; }}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      INT_FIELD("model.stages", model.stages),
      INT_LIST_FIELD("model.widths", model.widths),
      INT_LIST_FIELD("model.enc_depths", model.enc_depths),
      INT_LIST_FIELD("model.dec_depths", model.dec_depths),
      INT_FIELD("model.window", model.window),
      INT_FIELD("model.latent_channels", model.latent_channels),
      INT_FIELD("model.hyper_channels", model.hyper_channels),
      INT_FIELD("model.hyper_depth", model.hyper_depth),
      INT_FIELD("model.pad_multiple", model.pad_multiple),
      INT_FIELD("model.head_dim", model.head_dim),
      INT_FIELD("model.mlp_ratio", model.mlp_ratio),
      INT_FIELD("model.epg_channels", model.epg_channels),
      {"train.lambdas",
       {[](RunConfig& c, const std::string& v) { c.train.lambdas = parse_list<double>("train.lambdas", v); },
        [](const RunConfig& c) { return join(c.train.lambdas); }}},
      DOUBLE_FIELD("train.lambda0", train.lambda0),
      DOUBLE_FIELD("train.lr", train.lr),
      DOUBLE_FIELD("train.stage2_lr", train.stage2_lr),
      DOUBLE_FIELD("train.beta1", train.beta1),
      DOUBLE_FIELD("train.beta2", train.beta2),
      DOUBLE_FIELD("train.adam_eps", train.adam_eps),
      INT_FIELD("train.batch_size", train.batch_size),
      INT_FIELD("train.stage2_batch_size", train.stage2_batch_size),
      INT_FIELD("train.stage1_epochs", train.stage1_epochs),
      INT_FIELD("train.stage2_epochs", train.stage2_epochs),
      INT_FIELD("train.stage1_steps", train.stage1_steps),
      INT_FIELD("train.stage2_steps", train.stage2_steps),
      INT_FIELD("train.crop", train.crop),
      {"train.seed",
       {[](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>("train.seed", v); },
        [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
      STRING_FIELD("train.precision", train.precision),
      INT_FIELD("train.checkpoint_every", train.checkpoint_every),
      INT_FIELD("train.log_every", train.log_every),
      STRING_FIELD("paths.dataset", paths.dataset),
      STRING_FIELD("paths.backbone", paths.backbone),
      STRING_FIELD("paths.promptset_dir", paths.promptset_dir),
      STRING_FIELD("paths.metrics_log", paths.metrics_log),
      STRING_FIELD("paths.out_dir", paths.out_dir),
  };
  return table;
}

#undef INT_FIELD
#undef DOUBLE_FIELD
#undef INT_LIST_FIELD
#undef STRING_FIELD

}  // namespace

std::uint32_t fnv1a32(const std::string& s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (stages < 1) fail("model.stages must be >= 1");
  const auto n = static_cast<std::size_t>(stages);
  if (widths.size() != n || enc_depths.size() != n || dec_depths.size() != n) {
    fail("model.widths/enc_depths/dec_depths need one entry per stage");
  }
  if (window < 2 || window % 2 != 0) fail("model.window must be even and >= 2");
  if (head_dim < 1) fail("model.head_dim must be >= 1");
  for (int w : widths) {
    if (w < 1 || w % head_dim != 0) fail("model.widths must be positive multiples of head_dim");
  }
  for (int d : enc_depths) if (d < 1) fail("model.enc_depths must be >= 1");
  for (int d : dec_depths) if (d < 1) fail("model.dec_depths must be >= 1");
  if (latent_channels < 1 || hyper_channels < 1 || epg_channels < 1 || mlp_ratio < 1) {
    fail("channel counts must be >= 1");
  }
  if (hyper_depth < 1) fail("model.hyper_depth must be >= 1");
  if (pad_multiple < 1 || pad_multiple % reduction() != 0) {
    fail("model.pad_multiple must be a multiple of 2^(stages + hyper_depth) = " +
         std::to_string(reduction()));
  }
}

std::string ModelConfig::canonical() const {
  RunConfig rc;
  rc.model = *this;
  std::string out;
  for (const auto& [key, field] : fields()) {
    if (key.rfind("model.", 0) == 0) out += key + "=" + field.get(rc) + "\n";
  }
  return out;
}

std::uint32_t ModelConfig::model_id() const { return fnv1a32(canonical()); }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.widths = {128, 128, 128, 128};
  c.enc_depths = {2, 2, 6, 2};
  c.dec_depths = {2, 6, 2, 2};
  c.window = 8;
  c.latent_channels = 192;
  c.hyper_channels = 192;
  c.head_dim = 32;
  c.mlp_ratio = 2;
  c.epg_channels = 16;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (!(lambda0 > 0)) fail("train.lambda0 must be > 0");
  for (double l : lambdas) if (!(l > 0)) fail("train.lambdas must be > 0");
  if (lambdas.size() > 254) fail("train.lambdas supports at most 254 entries");
  if (!(stage2_lr >= 0) || stage2_batch_size < 0) fail("train.stage2_lr and stage2_batch_size must be >= 0");
  if (!(lr > 0) || batch_size < 1 || crop < 1) fail("train.lr, batch_size, crop must be positive");
  if (precision != "float" && precision != "double") fail("train.precision must be float or double");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig rc;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("config: unknown key " + key);
    it->second.set(rc, value);
  }
  rc.model.validate();
  rc.train.validate();
  return rc;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

}  // namespace lpmc
