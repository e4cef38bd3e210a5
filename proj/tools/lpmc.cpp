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

// lpmc: train, tune, encode, decode and evaluate the prompt codec.
//
// Exit codes: 0 success, 1 other failure, 2 model mismatch, 3 corrupt
// stream, 4 configuration error. Failures print one "lpmc: <kind>: <msg>"
// line on stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lpmc/coder.hpp"
#include "lpmc/report.hpp"
#include "lpmc/train.hpp"

namespace fs = std::filesystem;

namespace lpmc {
namespace {

struct Args {
  std::string config;
  std::string stage = "all";
  int lambda_id = -1;
  std::string in, out, promptset, dir, test, anchor, metric = "psnr", out_prefix;
  int count = 16, width = 64, height = 64;
  std::uint64_t seed = 1;
  bool full_scale = false;
};

RunConfig load_config(const Args& a) { return a.config.empty() ? RunConfig{} : RunConfig::load(a.config); }

std::string promptset_path(const RunConfig& rc, int id) {
  return (fs::path(rc.paths.promptset_dir) / ("promptset_" + std::to_string(id) + ".lpmk")).string();
}

double lambda_of(const RunConfig& rc, int id) {
  if (id < 0 || id >= static_cast<int>(rc.train.lambdas.size())) {
    throw ConfigError("lambda id " + std::to_string(id) + " is outside train.lambdas");
  }
  return rc.train.lambdas[static_cast<std::size_t>(id)];
}

// Checkpoints hold 32-bit floats; double runs go through a float mirror.
template <typename S>
ParamStore<float> to_float(const ParamStore<S>& p) {
  ParamStore<float> out;
  for (const auto& e : p.entries()) {
    out.add(e.name, Tensor<float>(e.tensor.shape(), e.tensor.value().template cast<float>()), e.trainable);
  }
  return out;
}

template <typename S>
void save_params(const std::string& path, const CheckpointHeader& h, const ParamStore<S>& p) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_file_atomic(path, serialize_checkpoint(h, to_float(p)));
}

template <typename S>
CheckpointHeader load_params(const std::string& path, const ModelConfig& cfg, CheckpointKind kind,
                             ParamStore<S>& into) {
  const auto bytes = read_file(path);
  const CheckpointHeader h = peek_checkpoint(bytes);
  if (h.model_id != cfg.model_id()) throw ModelMismatch(path + " was written for a different model config");
  if (h.kind != kind) throw FormatError(path + " holds the wrong checkpoint kind");
  ParamStore<float> mirror = to_float(into);
  parse_checkpoint(bytes, mirror);
  for (std::size_t i = 0; i < into.entries().size(); ++i) {
    into.entries()[i].tensor.value() = mirror.entries()[i].tensor.value().template cast<S>();
  }
  return h;
}

template <typename S>
Backbone<S> load_backbone(const RunConfig& rc) {
  Backbone<S> bb(rc.model, rc.train.seed);
  load_params(rc.paths.backbone, rc.model, CheckpointKind::kBackbone, bb.params());
  return bb;
}

template <typename S>
PromptSet<S> load_promptset(const RunConfig& rc, const std::string& path) {
  const CheckpointHeader h = peek_checkpoint(read_file(path));
  PromptSet<S> set(rc.model, h.lambda_id, lambda_of(rc, h.lambda_id), 0);
  load_params(path, rc.model, CheckpointKind::kPromptSet, set.params());
  return set;
}

std::vector<Image> load_dataset(const std::string& dir) {
  if (dir.empty()) throw ConfigError("paths.dataset is not set");
  std::vector<Image> images;
  for (const auto& p : list_images(dir)) images.push_back(load_ppm(p));
  if (images.empty()) throw std::runtime_error("no .ppm images in " + dir);
  return images;
}

class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path) {
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw std::runtime_error("cannot open metrics log " + path);
    if (fresh) out_ << metrics_log_header();
  }
  void write(const LossReport& r) { out_ << metrics_log_row(r) << std::flush; }

 private:
  std::ofstream out_;
};

TrainHooks make_hooks(const RunConfig& rc, MetricsLog& log, std::function<void(long)> checkpoint) {
  TrainHooks h;
  const int every = std::max(1, rc.train.log_every);
  h.on_step = [&log, every](const LossReport& r) {
    if (r.step % every == 0) log.write(r);
  };
  h.on_epoch = [](const LossReport& r) {
    std::printf("stage %d lambda_id %d step %ld loss %s bpp %s distortion %s\n", r.stage, r.lambda_id, r.step,
                fmt6(r.loss).c_str(), fmt6(r.bpp).c_str(), fmt6(r.distortion).c_str());
    std::fflush(stdout);
  };
  h.on_checkpoint = std::move(checkpoint);
  h.on_warning = [](const std::string& w) { std::fprintf(stderr, "lpmc: warning: %s\n", w.c_str()); };
  return h;
}

template <typename S>
void tune_one(const RunConfig& rc, Backbone<S>& bb, const std::vector<Image>& images, int id, MetricsLog& log) {
  PromptSet<S> set(rc.model, id, lambda_of(rc, id), rc.train.seed + 1 + static_cast<std::uint64_t>(id));
  CropStream<S> data(images, rc.train.crop, rc.train.seed);
  const std::string path = promptset_path(rc, id);
  const CheckpointHeader h{rc.model.model_id(), CheckpointKind::kPromptSet, static_cast<std::uint8_t>(id)};
  train_stage2(bb, set, data, rc.train, make_hooks(rc, log, [&](long) { save_params(path, h, set.params()); }));
  save_params(path, h, set.params());
}

template <typename S>
int cmd_train(const RunConfig& rc, const Args& a) {
  if (a.stage != "1" && a.stage != "2" && a.stage != "all") throw ConfigError("--stage must be 1, 2 or all");
  const auto images = load_dataset(rc.paths.dataset);
  MetricsLog log(rc.paths.metrics_log);
  std::optional<Backbone<S>> bb;
  if (a.stage != "2") {
    bb.emplace(rc.model, rc.train.seed);
    CropStream<S> data(images, rc.train.crop, rc.train.seed);
    const CheckpointHeader h{rc.model.model_id(), CheckpointKind::kBackbone, kBareLambdaId};
    train_stage1(*bb, data, rc.train,
                 make_hooks(rc, log, [&](long) { save_params(rc.paths.backbone, h, bb->params()); }));
    save_params(rc.paths.backbone, h, bb->params());
  } else {
    bb.emplace(load_backbone<S>(rc));
  }
  if (a.stage != "1") {
    for (int id = 0; id < static_cast<int>(rc.train.lambdas.size()); ++id) tune_one(rc, *bb, images, id, log);
  }
  return 0;
}

template <typename S>
int cmd_tune(const RunConfig& rc, const Args& a) {
  lambda_of(rc, a.lambda_id);
  Backbone<S> bb = load_backbone<S>(rc);
  const auto images = load_dataset(rc.paths.dataset);
  MetricsLog log(rc.paths.metrics_log);
  tune_one(rc, bb, images, a.lambda_id, log);
  return 0;
}

// The prompt set for encode/maps: --promptset wins over --lambda-id.
template <typename S>
std::optional<PromptSet<S>> pick_promptset(const RunConfig& rc, const Args& a) {
  if (!a.promptset.empty()) return load_promptset<S>(rc, a.promptset);
  if (a.lambda_id >= 0 && a.lambda_id != kBareLambdaId) return load_promptset<S>(rc, promptset_path(rc, a.lambda_id));
  return std::nullopt;
}

template <typename S>
int cmd_encode(const RunConfig& rc, const Args& a) {
  const Backbone<S> bb = load_backbone<S>(rc);
  auto set = pick_promptset<S>(rc, a);
  const Image img = load_ppm(a.in);
  const auto bytes =
      compress(bb, build_tables(bb), set ? &*set : nullptr, image_to_tensor<S>(img)).serialize();
  write_file_atomic(a.out, bytes);
  std::printf("bytes %zu bpp %s\n", bytes.size(),
              fmt6(8.0 * static_cast<double>(bytes.size()) / (static_cast<double>(img.width) * img.height)).c_str());
  return 0;
}

template <typename S>
int cmd_decode(const RunConfig& rc, const Args& a) {
  const Backbone<S> bb = load_backbone<S>(rc);
  Bitstream bs;
  try {
    bs = Bitstream::parse(read_file(a.in), rc.model.model_id());
  } catch (const FormatError& e) {
    throw CorruptStream(e.what());
  }
  std::optional<PromptSet<S>> set;
  if (bs.lambda_id != kBareLambdaId) {
    set.emplace(load_promptset<S>(rc, a.promptset.empty() ? promptset_path(rc, bs.lambda_id) : a.promptset));
    if (set->lambda_id() != bs.lambda_id) {
      throw ModelMismatch("stream needs lambda id " + std::to_string(bs.lambda_id) + ", prompt set has " +
                          std::to_string(set->lambda_id()));
    }
  }
  const Tensor<S> x_hat = decompress(bb, build_tables(bb), set ? &*set : nullptr, bs);
  save_ppm(a.out, tensor_to_image(crop(x_hat, bs.height, bs.width)));
  return 0;
}

// Every prompt set present in the prompt directory, ascending id.
template <typename S>
std::vector<PromptSet<S>> available_promptsets(const RunConfig& rc) {
  std::vector<PromptSet<S>> sets;
  for (int id = 0; id < static_cast<int>(rc.train.lambdas.size()); ++id) {
    const std::string path = promptset_path(rc, id);
    if (fs::exists(path)) {
      sets.push_back(load_promptset<S>(rc, path));
    } else {
      std::fprintf(stderr, "lpmc: warning: %s missing, rate point skipped\n", path.c_str());
    }
  }
  return sets;
}

// lambda_ids in ascending λ, the bare backbone at λ₀.
std::vector<int> lambda_order(const RunConfig& rc) {
  std::vector<std::pair<double, int>> pts{{rc.train.lambda0, kBareLambdaId}};
  for (int i = 0; i < static_cast<int>(rc.train.lambdas.size()); ++i) {
    pts.emplace_back(rc.train.lambdas[static_cast<std::size_t>(i)], i);
  }
  std::stable_sort(pts.begin(), pts.end());
  std::vector<int> out;
  for (const auto& p : pts) out.push_back(p.second);
  return out;
}

template <typename S>
int cmd_eval(const RunConfig& rc, const Args& a) {
  const Backbone<S> bb = load_backbone<S>(rc);
  auto sets = available_promptsets<S>(rc);
  std::vector<PromptSet<S>*> ptrs;
  for (auto& s : sets) ptrs.push_back(&s);
  std::vector<std::pair<std::string, Image>> images;
  for (const auto& p : list_images(a.dir)) images.emplace_back(fs::path(p).filename().string(), load_ppm(p));
  if (images.empty()) throw std::runtime_error("no .ppm images in " + a.dir);
  const auto rows = rd_sweep(bb, build_tables(bb), ptrs, rc.train.lambda0, images, thread_count_from_env());
  const std::string out = a.out.empty() ? (fs::path(rc.paths.out_dir) / "rd.csv").string() : a.out;
  write_text_atomic(out, rd_points_csv(rows));
  std::printf("lambda_id,bpp,psnr,msssim\n");
  for (const auto& p : average_by_lambda(rows, lambda_order(rc))) {
    std::printf("%d,%s,%s,%s\n", p.lambda_id, fmt6(p.bpp).c_str(), fmt6(p.psnr).c_str(), fmt6(p.msssim).c_str());
  }
  return 0;
}

int cmd_bdrate(const RunConfig& rc, const Args& a) {
  if (a.metric != "psnr" && a.metric != "msssim") throw ConfigError("--metric must be psnr or msssim");
  auto curve = [&](const std::string& path) {
    const auto raw = read_file(path);
    std::vector<RDSample> out;
    for (const auto& p : average_by_lambda(parse_rd_points_csv(std::string(raw.begin(), raw.end())), lambda_order(rc))) {
      // MS-SSIM is compared in dB, the usual convention for BD figures.
      out.push_back({p.bpp, a.metric == "psnr" ? p.psnr : -10.0 * std::log10(1.0 - p.msssim)});
    }
    return out;
  };
  std::printf("%s\n", fmt6(bd_rate(curve(a.test), curve(a.anchor))).c_str());
  return 0;
}

template <typename S>
int cmd_maps(const RunConfig& rc, const Args& a) {
  const Backbone<S> bb = load_backbone<S>(rc);
  auto set = pick_promptset<S>(rc, a);
  const Image img = load_ppm(a.in);
  ForwardOptions<S> opts;
  opts.record_attention = set.has_value();
  Rng rng(0);
  NoGradGuard guard;
  const auto f = forward(bb, set ? &*set : nullptr,
                         pad_to_multiple(image_to_tensor<S>(img), static_cast<Index>(rc.model.pad_multiple)), opts, rng);
  const HeatMap bits = bit_allocation_map(f.y_likelihood);
  write_file_atomic(a.out_prefix + "_bits.pgm", bits.to_pgm());
  write_text_atomic(a.out_prefix + "_bits.csv", bits.to_csv());
  std::printf("bits_mean %s\n", fmt6(bits.mean()).c_str());
  if (set) {
    const HeatMap attn = attention_map(f.attention, bits.height, bits.width, img.height, img.width);
    write_file_atomic(a.out_prefix + "_attn.pgm", attn.to_pgm());
    write_text_atomic(a.out_prefix + "_attn.csv", attn.to_csv());
    std::printf("attention_mean %s\n", fmt6(attn.mean()).c_str());
  }
  return 0;
}

int cmd_synth(const Args& a) {
  if (a.count < 1 || a.width < 1 || a.height < 1) throw ConfigError("--count, --width and --height must be positive");
  fs::create_directories(a.dir);
  for (int i = 0; i < a.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03d.ppm", i);
    save_ppm((fs::path(a.dir) / name).string(), synth_image(a.seed + static_cast<std::uint64_t>(i), a.width, a.height));
  }
  return 0;
}

int cmd_report(const RunConfig& rc, const Args& a) {
  if (a.full_scale) {
    const ModelConfig cfg = ModelConfig::full_scale();
    const Backbone<float> bb(cfg, 0);
    const PromptSet<float> set(cfg, 0, rc.train.lambdas.front(), 0);
    std::fputs(param_report(bb, {&set}).to_text().c_str(), stdout);
    return 0;
  }
  const Backbone<float> bb = load_backbone<float>(rc);
  const auto sets = available_promptsets<float>(rc);
  std::vector<const PromptSet<float>*> ptrs;
  for (const auto& s : sets) ptrs.push_back(&s);
  std::fputs(param_report(bb, ptrs).to_text().c_str(), stdout);
  return 0;
}

template <typename S>
int dispatch(const std::string& cmd, const RunConfig& rc, const Args& a) {
  if (cmd == "train") return cmd_train<S>(rc, a);
  if (cmd == "tune") return cmd_tune<S>(rc, a);
  if (cmd == "encode") return cmd_encode<S>(rc, a);
  if (cmd == "decode") return cmd_decode<S>(rc, a);
  if (cmd == "eval") return cmd_eval<S>(rc, a);
  if (cmd == "maps") return cmd_maps<S>(rc, a);
  if (cmd == "bdrate") return cmd_bdrate(rc, a);
  if (cmd == "report") return cmd_report(rc, a);
  return cmd_synth(a);
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int fail(const std::string& kind, const std::exception& e, int code) {
  std::string msg = one_line(e.what());
  if (msg.rfind(kind + ": ", 0) == 0) msg.erase(0, kind.size() + 2);
  std::fprintf(stderr, "lpmc: %s: %s\n", kind.c_str(), msg.c_str());
  return code;
}

int run(int argc, char** argv) {
  Args a;
  CLI::App app{"Variable-rate learned image codec with layer-adaptive prompts"};
  app.require_subcommand(1);
  auto cfg = [&](CLI::App* s) {
    s->add_option("--config", a.config, "run configuration file")->check(CLI::ExistingFile);
    return s;
  };
  auto* train = cfg(app.add_subcommand("train", "stage 1 backbone and stage 2 prompt sets"));
  train->add_option("--stage", a.stage, "1, 2 or all");
  auto* tune = cfg(app.add_subcommand("tune", "train one prompt set against the frozen backbone"));
  tune->add_option("--lambda-id", a.lambda_id, "index into train.lambdas")->required();
  auto* encode = cfg(app.add_subcommand("encode", "compress a PPM image"));
  encode->add_option("--in", a.in)->required();
  encode->add_option("--out", a.out)->required();
  encode->add_option("--promptset", a.promptset, "prompt set checkpoint (default: bare backbone)");
  encode->add_option("--lambda-id", a.lambda_id, "prompt set from paths.promptset_dir");
  auto* decode = cfg(app.add_subcommand("decode", "decompress a bitstream to PPM"));
  decode->add_option("--in", a.in)->required();
  decode->add_option("--out", a.out)->required();
  decode->add_option("--promptset", a.promptset, "override the prompt set matching the stream");
  auto* eval = cfg(app.add_subcommand("eval", "R-D sweep over a directory of PPM images"));
  eval->add_option("--dir", a.dir)->required();
  eval->add_option("--out", a.out, "CSV path (default: paths.out_dir/rd.csv)");
  auto* bdrate = cfg(app.add_subcommand("bdrate", "BD-rate between two R-D CSVs"));
  bdrate->add_option("--test", a.test)->required()->check(CLI::ExistingFile);
  bdrate->add_option("--anchor", a.anchor)->required()->check(CLI::ExistingFile);
  bdrate->add_option("--metric", a.metric, "psnr or msssim");
  auto* maps = cfg(app.add_subcommand("maps", "bit-allocation and prompt attention maps"));
  maps->add_option("--in", a.in)->required();
  maps->add_option("--out-prefix", a.out_prefix)->required();
  maps->add_option("--promptset", a.promptset);
  maps->add_option("--lambda-id", a.lambda_id);
  auto* synth = app.add_subcommand("synth", "write synthetic PPM images");
  synth->add_option("--out-dir", a.dir)->required();
  synth->add_option("--count", a.count);
  synth->add_option("--width", a.width);
  synth->add_option("--height", a.height);
  synth->add_option("--seed", a.seed);
  auto* report = cfg(app.add_subcommand("report", "parameter counts and prompt/backbone ratio"));
  report->add_flag("--full-scale", a.full_scale, "count the full-scale config instead of checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "lpmc: usage: %s\n", one_line(e.what()).c_str());
    return 1;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const RunConfig rc = load_config(a);
    return rc.train.precision == "double" ? dispatch<double>(cmd, rc, a) : dispatch<float>(cmd, rc, a);
  } catch (const ModelMismatch& e) {
    return fail("model_mismatch", e, 2);
  } catch (const CorruptStream& e) {
    return fail("corrupt_stream", e, 3);
  } catch (const ConfigError& e) {
    return fail("config", e, 4);
  } catch (const std::exception& e) {
    return fail("error", e, 1);
  }
}

}  // namespace
}  // namespace lpmc

int main(int argc, char** argv) { return lpmc::run(argc, argv); }
