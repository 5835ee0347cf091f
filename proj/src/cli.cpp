// Copyright 2026 The motion2music Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "m2m/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "m2m/audio.hpp"
#include "m2m/data.hpp"
#include "m2m/evaluation.hpp"
#include "m2m/training.hpp"
#include "m2m/vq_codec.hpp"

namespace m2m {
namespace fs = std::filesystem;
namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

struct Command {
  CLI::App* app = nullptr;
  CommonOptions common;
  /// Flag shortcuts: key -> value, filled only for flags that were given.
  std::map<std::string, std::string> shortcuts;
  std::function<KeyValues()> defaults;
  std::function<void(const KeyValues&, const fs::path&, std::ostream&)> run;
};

fs::path output_dir(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / command;
}

KeyValues resolve(const Command& cmd) {
  KeyValues kv = cmd.defaults();
  std::set<std::string> known;
  for (const auto& [k, v] : kv) known.insert(k);
  if (!cmd.common.config.empty()) {
    for (const auto& [k, v] : load_key_values(cmd.common.config)) kv[k] = v;
  }
  for (const auto& o : cmd.common.overrides) apply_override(kv, o);
  for (const auto& [k, v] : cmd.shortcuts) kv[k] = v;
  reject_unknown_keys(kv, known);
  return kv;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void shortcut(Command& cmd, const std::string& flag, const std::string& key,
              const std::string& help) {
  cmd.app->add_option_function<std::string>(
      flag, [&cmd, key](const std::string& v) { cmd.shortcuts[key] = v; }, help);
}

void add_common(Command& cmd) {
  cmd.app->add_option("--config", cmd.common.config, "key = value config file");
  cmd.app->add_option("--set", cmd.common.overrides, "override a config key (key=value)")
      ->allow_extra_args(false);
  cmd.app->add_option("--out", cmd.common.out,
                      std::string("output directory (default: $") + kOutputRootEnv + "/<command>)");
}

const std::string& required(const KeyValues& kv, const std::string& key) {
  const auto& v = kv.at(key);
  if (v.empty()) throw ConfigError("config key '" + key + "' is required");
  return v;
}

Waveform tensor_waveform(const torch::Tensor& t) {
  auto a = t.contiguous();
  Waveform w;
  w.samples.assign(a.data_ptr<float>(), a.data_ptr<float>() + a.numel());
  return w;
}

// --- make-toy-data -----------------------------------------------------------

KeyValues toy_defaults() {
  ToyDatasetConfig d;
  return {{"genres", std::to_string(d.genres)},
          {"clips", std::to_string(d.clips)},
          {"clips_per_song", std::to_string(d.clips_per_song)},
          {"clip_seconds", format_double(d.clip_seconds)},
          {"noise_level", format_double(d.noise_level)},
          {"train_ratio", format_double(d.ratios.train)},
          {"val_ratio", format_double(d.ratios.val)},
          {"test_ratio", format_double(d.ratios.test)},
          {"seed", std::to_string(d.seed)}};
}

void run_toy(const KeyValues& kv, const fs::path& out, std::ostream& log) {
  ToyDatasetConfig cfg;
  cfg.genres = static_cast<int>(parse_int("genres", kv.at("genres")));
  cfg.clips = static_cast<int>(parse_int("clips", kv.at("clips")));
  cfg.clips_per_song = static_cast<int>(parse_int("clips_per_song", kv.at("clips_per_song")));
  cfg.clip_seconds = parse_double("clip_seconds", kv.at("clip_seconds"));
  cfg.noise_level = parse_double("noise_level", kv.at("noise_level"));
  cfg.ratios = {parse_double("train_ratio", kv.at("train_ratio")),
                parse_double("val_ratio", kv.at("val_ratio")),
                parse_double("test_ratio", kv.at("test_ratio"))};
  cfg.seed = parse_uint("seed", kv.at("seed"));
  const auto m = synth_toy_dataset(out, cfg);
  log << "wrote " << m.records.size() << " clips to " << (out / "manifests" / "toy.json").string()
      << '\n';
}

// --- pretrain-codec ----------------------------------------------------------

KeyValues codec_defaults() {
  PretrainConfig p;
  CodecConfig c;
  return {{"level", "high"},
          {"manifest", ""},
          {"steps", std::to_string(p.steps)},
          {"batch_size", std::to_string(p.batch_size)},
          {"crop_samples", std::to_string(p.crop_samples)},
          {"lr", format_double(p.learning_rate)},
          {"ema_decay", format_double(p.ema_decay)},
          {"commitment", format_double(p.commitment_weight)},
          {"dead_code_steps", std::to_string(p.dead_code_steps)},
          {"codebook_size", std::to_string(c.codebook_size)},
          {"seed", std::to_string(p.seed)}};
}

void run_pretrain(const KeyValues& kv, const fs::path& out, std::ostream& log) {
  const Level level = parse_level(kv.at("level"));
  CodecConfig cc = CodecConfig::for_level(level);
  cc.codebook_size = parse_int("codebook_size", kv.at("codebook_size"));
  PretrainConfig pc;
  pc.steps = parse_int("steps", kv.at("steps"));
  pc.batch_size = parse_int("batch_size", kv.at("batch_size"));
  pc.crop_samples = parse_int("crop_samples", kv.at("crop_samples"));
  pc.learning_rate = parse_double("lr", kv.at("lr"));
  pc.ema_decay = parse_double("ema_decay", kv.at("ema_decay"));
  pc.commitment_weight = parse_double("commitment", kv.at("commitment"));
  pc.dead_code_steps = parse_int("dead_code_steps", kv.at("dead_code_steps"));
  pc.seed = parse_uint("seed", kv.at("seed"));
  if (pc.steps < 0 || pc.batch_size < 1 || pc.crop_samples < 1 || !(pc.learning_rate > 0)) {
    throw ConfigError("steps >= 0, batch_size >= 1, crop_samples >= 1 and lr > 0 are required");
  }
  const auto manifest = load_manifest(required(kv, "manifest"));

  std::vector<Waveform> corpus, heldout;
  std::set<std::string> seen;
  for (const auto& r : manifest.records) {
    if (r.split == Split::kTrain) {
      if (seen.insert(r.song_id).second) corpus.push_back(load_audio(manifest.root / r.audio_path));
    } else {
      heldout.push_back(tensor_waveform(load_clip(manifest, r, ClipLoadOptions{false}).audio));
    }
  }
  CodecLevel codec(cc, pc.seed);
  log << "pretraining " << to_string(level) << " codec on " << corpus.size() << " songs\n";
  const auto report = pretrain_codec(codec, corpus, pc, heldout);
  codec.save(out / ("codec_" + std::string(to_string(level)) + ".m2a"));

  nlohmann::ordered_json j;
  j["level"] = std::string(to_string(level));
  j["steps"] = pc.steps;
  j["initial_heldout_l1"] = std::isfinite(report.initial_heldout_l1) ? nlohmann::ordered_json(report.initial_heldout_l1) : nullptr;
  j["final_heldout_l1"] = std::isfinite(report.final_heldout_l1) ? nlohmann::ordered_json(report.final_heldout_l1) : nullptr;
  j["codebook_usage"] = codebook_usage(codec, corpus);
  j["final_loss"] = report.losses.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(report.losses.back());
  write_text(out / "pretrain.json", j.dump(2) + "\n");
  log << "held-out L1 " << report.initial_heldout_l1 << " -> " << report.final_heldout_l1 << '\n';
}

// --- train -------------------------------------------------------------------

void run_train(const KeyValues& kv, const fs::path& out, std::ostream& log) {
  const auto cfg = TrainConfig::from_key_values(kv);
  const auto manifest = load_manifest(required(kv, "manifest"));
  const auto codec = CodecLevel::load(required(kv, "codec"));
  std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw DataError("cannot write metrics log in " + out.string());
  TrainIO io;
  io.metrics = &metrics;
  io.log = &log;
  io.divergence_checkpoint = out / "last_good.m2a";
  const auto ckpt = train_level(cfg, manifest, codec, io);
  ckpt.save(out / "checkpoint.m2a");
  log << "checkpoint written to " << (out / "checkpoint.m2a").string() << '\n';
}

// --- generate ----------------------------------------------------------------

KeyValues generate_defaults() {
  return {{"checkpoint", ""}, {"manifest", ""}, {"split", "test"}, {"clip", ""}, {"denoise", "false"}};
}

std::string manifest_path(const KeyValues& kv, const Checkpoint& ckpt) {
  const auto& m = kv.at("manifest");
  if (!m.empty()) return m;
  if (ckpt.config.manifest.empty()) throw ConfigError("config key 'manifest' is required");
  return ckpt.config.manifest;
}

void run_generate(const KeyValues& kv, const fs::path& out, std::ostream& log) {
  auto ckpt = Checkpoint::load(required(kv, "checkpoint"));
  const auto manifest = load_manifest(manifest_path(kv, ckpt));
  const bool denoise = parse_bool("denoise", kv.at("denoise"));
  const Split split = parse_split(kv.at("split"));
  const std::string only = kv.at("clip");
  const auto spans = training_spans(manifest, split, ckpt.config.clip_seconds);
  const ClipLoadOptions load{!ckpt.config.no_visual};
  int written = 0;
  for (const auto& span : spans) {
    if (!only.empty() && span.clip_id != only) continue;
    const ClipRecord* rec = nullptr;
    for (const auto& r : manifest.records) {
      if (r.song_id == span.song_id) rec = &r;
    }
    const auto ex = cut_clip(load_song(manifest, *rec, load), span.start_seconds,
                             ckpt.config.clip_seconds, span.clip_id);
    const auto music = generate_music(ckpt, ex.motion, ex.visual, denoise);
    save_wav(music.audio, out / (span.clip_id + ".wav"));
    std::string codes;
    auto idx = music.indices.contiguous();
    for (int64_t i = 0; i < idx.numel(); ++i) {
      codes += std::to_string(idx.data_ptr<int64_t>()[i]) + (i + 1 < idx.numel() ? " " : "\n");
    }
    write_text(out / (span.clip_id + ".codes.txt"), codes);
    ++written;
  }
  if (written == 0) throw DataError("no matching clips to generate");
  log << "generated " << written << " clip(s) in " << out.string() << '\n';
}

// --- evaluate ----------------------------------------------------------------

KeyValues evaluate_defaults() {
  return {{"checkpoint", ""},
          {"manifest", ""},
          {"split", "test"},
          {"tolerance", format_double(kBeatTolerance)},
          {"embedder", "melstats"},
          {"denoise", "false"},
          {"ground_truth_as_generated", "false"},
          {"seed", "0"}};
}

void run_evaluate(const KeyValues& kv, const fs::path& out, std::ostream& log) {
  auto ckpt = Checkpoint::load(required(kv, "checkpoint"));
  const auto manifest = load_manifest(manifest_path(kv, ckpt));
  RunEvaluationOptions opts;
  opts.split = parse_split(kv.at("split"));
  opts.tolerance = parse_double("tolerance", kv.at("tolerance"));
  if (!(opts.tolerance > 0)) throw ConfigError("tolerance must be positive");
  opts.embedder = kv.at("embedder");
  make_embedder(opts.embedder);
  opts.denoise = parse_bool("denoise", kv.at("denoise"));
  opts.ground_truth_as_generated =
      parse_bool("ground_truth_as_generated", kv.at("ground_truth_as_generated"));
  opts.seed = parse_uint("seed", kv.at("seed"));
  const auto report = evaluate_run(ckpt, manifest, opts);
  write_report(report, out / "report.json");
  log << "coverage " << report.coverage << " hit " << report.hit << " genre accuracy "
      << report.genre_accuracy << '\n';
}

// --- denoise -----------------------------------------------------------------

KeyValues denoise_defaults() {
  DenoiseParams d;
  return {{"input", ""},
          {"n_fft", std::to_string(d.n_fft)},
          {"hop", std::to_string(d.hop)},
          {"noise_fraction", format_double(d.noise_fraction)},
          {"threshold_std", format_double(d.threshold_std)}};
}

void run_denoise(const KeyValues& kv, const fs::path& out, std::ostream& log) {
  const fs::path input = required(kv, "input");
  DenoiseParams p;
  p.n_fft = static_cast<int>(parse_int("n_fft", kv.at("n_fft")));
  p.hop = static_cast<int>(parse_int("hop", kv.at("hop")));
  p.noise_fraction = parse_double("noise_fraction", kv.at("noise_fraction"));
  p.threshold_std = parse_double("threshold_std", kv.at("threshold_std"));
  if (p.n_fft < 2 || p.hop < 1 || !(p.noise_fraction > 0 && p.noise_fraction <= 1)) {
    throw ConfigError("n_fft >= 2, hop >= 1 and noise_fraction in (0, 1] are required");
  }
  const auto target = out / (input.stem().string() + "_denoised.wav");
  save_wav(spectral_denoise(load_audio(input), p), target);
  log << "wrote " << target.string() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  torch::set_num_threads(1);
  CLI::App app{"Dance-conditioned music generation toolkit", "m2m"};
  app.require_subcommand(1);

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help, std::function<KeyValues()> defaults,
                 std::function<void(const KeyValues&, const fs::path&, std::ostream&)> run) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    cmd->defaults = std::move(defaults);
    cmd->run = std::move(run);
    add_common(*cmd);
    commands.push_back(std::move(cmd));
    return *commands.back();
  };

  auto& toy = add("make-toy-data", "write the synthetic click-track corpus", toy_defaults, run_toy);
  shortcut(toy, "--genres", "genres", "number of genres (2-6)");
  shortcut(toy, "--clips", "clips", "number of clips");
  shortcut(toy, "--seed", "seed", "random seed");

  auto& pre = add("pretrain-codec", "train the VQ audio codec for one level", codec_defaults, run_pretrain);
  shortcut(pre, "--level", "level", "high or low");
  shortcut(pre, "--manifest", "manifest", "dataset manifest");

  auto& train = add("train", "train the generator for one level",
                    [] { return TrainConfig{}.to_key_values(); }, run_train);
  shortcut(train, "--level", "level", "high or low");
  shortcut(train, "--manifest", "manifest", "dataset manifest");
  shortcut(train, "--codec", "codec", "pretrained codec archive");

  auto& gen = add("generate", "generate music for dataset clips", generate_defaults, run_generate);
  shortcut(gen, "--checkpoint", "checkpoint", "trained checkpoint");
  shortcut(gen, "--manifest", "manifest", "dataset manifest (default: the training one)");
  shortcut(gen, "--split", "split", "train, val or test");
  shortcut(gen, "--clip", "clip", "only this clip id");
  gen.app->add_flag_callback("--denoise", [&gen] { gen.shortcuts["denoise"] = "true"; },
                             "apply spectral denoising");

  auto& ev = add("evaluate", "beat and genre metrics for a checkpoint", evaluate_defaults, run_evaluate);
  shortcut(ev, "--checkpoint", "checkpoint", "trained checkpoint");
  shortcut(ev, "--manifest", "manifest", "dataset manifest (default: the training one)");
  shortcut(ev, "--split", "split", "train, val or test");
  shortcut(ev, "--tolerance", "tolerance", "beat alignment tolerance in seconds");
  shortcut(ev, "--embedder", "embedder", "melstats or random");
  ev.app->add_flag_callback("--denoise", [&ev] { ev.shortcuts["denoise"] = "true"; },
                            "apply spectral denoising");

  auto& dn = add("denoise", "spectral-gating denoise of a WAV file", denoise_defaults, run_denoise);
  shortcut(dn, "--input", "input", "input WAV file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitConfig;
  }

  for (auto& cmd : commands) {
    if (!cmd->app->parsed()) continue;
    const std::string name = cmd->app->get_name();
    try {
      const KeyValues kv = resolve(*cmd);
      const fs::path dir = output_dir(cmd->common.out, name);
      fs::create_directories(dir);
      write_text(dir / "config.cfg", format_key_values(kv));
      cmd->run(kv, dir, err);
      return 0;
    } catch (const ConfigError& e) {
      err << name << ": configuration error: " << e.what() << '\n';
      return kExitConfig;
    } catch (const DataError& e) {
      err << name << ": data error: " << e.what() << '\n';
      return kExitData;
    } catch (const NumericError& e) {
      err << name << ": numeric failure: " << e.what() << '\n';
      return kExitNumeric;
    } catch (const std::exception& e) {
      err << name << ": internal error: " << e.what() << '\n';
      return kExitInternal;
    }
  }
  return kExitConfig;
}

}  // namespace m2m
