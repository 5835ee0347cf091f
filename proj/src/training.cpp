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

#include "m2m/training.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "json.hpp"

namespace m2m {
namespace {

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

template <typename Ref>
Field double_field(Ref ref) {
  return {[ref](const TrainConfig& c) { return format_double(ref(const_cast<TrainConfig&>(c))); },
          [ref](TrainConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_double(k, v);
          }};
}

template <typename Ref>
Field int_field(Ref ref) {
  return {[ref](const TrainConfig& c) { return std::to_string(ref(const_cast<TrainConfig&>(c))); },
          [ref](TrainConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_int(k, v);
          }};
}

template <typename Ref>
Field bool_field(Ref ref, bool negate = false) {
  return {[ref, negate](const TrainConfig& c) {
            return (ref(const_cast<TrainConfig&>(c)) != negate) ? std::string("true")
                                                                : std::string("false");
          },
          [ref, negate](TrainConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_bool(k, v) != negate;
          }};
}

template <typename Ref>
Field string_field(Ref ref) {
  return {[ref](const TrainConfig& c) { return ref(const_cast<TrainConfig&>(c)); },
          [ref](TrainConfig& c, const std::string&, const std::string& v) { ref(c) = v; }};
}

#define M2M_REF(expr) [](TrainConfig& c) -> auto& { return c.expr; }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> kFields = {
      {"level",
       {[](const TrainConfig& c) { return std::string(to_string(c.level)); },
        [](TrainConfig& c, const std::string&, const std::string& v) { c.level = parse_level(v); }}},
      {"seed",
       {[](const TrainConfig& c) { return std::to_string(c.seed); },
        [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint(k, v); }}},
      {"clip_seconds", double_field(M2M_REF(clip_seconds))},
      {"batch_size", int_field(M2M_REF(batch_size))},
      {"g_lr", double_field(M2M_REF(g_lr))},
      {"d_lr", double_field(M2M_REF(d_lr))},
      {"beta1", double_field(M2M_REF(beta1))},
      {"beta2", double_field(M2M_REF(beta2))},
      {"finetune_lr", double_field(M2M_REF(finetune_lr))},
      {"finetune_steps", int_field(M2M_REF(finetune_steps))},
      {"max_steps", int_field(M2M_REF(max_steps))},
      {"lambda_fm", double_field(M2M_REF(weights.feature_matching))},
      {"lambda_code", double_field(M2M_REF(weights.commitment))},
      {"lambda_wav", double_field(M2M_REF(weights.waveform))},
      {"lambda_mel", double_field(M2M_REF(weights.mel))},
      {"disable_adv", bool_field(M2M_REF(losses.adversarial), true)},
      {"disable_fm", bool_field(M2M_REF(losses.feature_matching), true)},
      {"disable_code", bool_field(M2M_REF(losses.commitment), true)},
      {"disable_wav", bool_field(M2M_REF(losses.waveform), true)},
      {"disable_mel", bool_field(M2M_REF(losses.mel), true)},
      {"no_motion", bool_field(M2M_REF(no_motion))},
      {"no_visual", bool_field(M2M_REF(no_visual))},
      {"d_layers", int_field(M2M_REF(d_layers))},
      {"no_scaling", bool_field(M2M_REF(no_scaling))},
      {"no_reshape", bool_field(M2M_REF(no_reshape))},
      {"no_finetune", bool_field(M2M_REF(no_finetune))},
      {"sigma", double_field(M2M_REF(sigma))},
      {"width_divisor", int_field(M2M_REF(width_divisor))},
      {"grad_clip", double_field(M2M_REF(grad_clip))},
      {"loss_crop_seconds", double_field(M2M_REF(loss_crop_seconds))},
      {"random_offsets", bool_field(M2M_REF(random_offsets))},
      {"metrics_tail", int_field(M2M_REF(metrics_tail))},
      {"manifest", string_field(M2M_REF(manifest))},
      {"codec", string_field(M2M_REF(codec))},
  };
  return kFields;
}

#undef M2M_REF

torch::Tensor stack_field(const std::vector<ClipExample>& batch,
                          torch::Tensor ClipExample::*member) {
  std::vector<torch::Tensor> parts;
  for (const auto& ex : batch) parts.push_back(ex.*member);
  return torch::stack(parts);
}

void capture_adam(const torch::optim::Adam& opt, const std::string& prefix,
                  std::map<std::string, torch::Tensor>& out) {
  const auto& params = opt.param_groups().at(0).params();
  for (size_t i = 0; i < params.size(); ++i) {
    auto it = opt.state().find(params[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const std::string key = prefix + std::to_string(i);
    out[key + ".step"] = torch::tensor(st.step(), torch::kInt64);
    out[key + ".exp_avg"] = st.exp_avg().detach().clone();
    out[key + ".exp_avg_sq"] = st.exp_avg_sq().detach().clone();
  }
}

std::vector<torch::Tensor> trainable(const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> out;
  for (const auto& p : params) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

}  // namespace

// --- TrainConfig -------------------------------------------------------------

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  for (const auto& [key, f] : fields()) kv[key] = f.get(*this);
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& values) {
  reject_unknown_keys(values, known_keys());
  TrainConfig cfg;
  for (const auto& [key, value] : values) fields().at(key).set(cfg, key, value);
  cfg.validate();
  return cfg;
}

const std::set<std::string>& TrainConfig::known_keys() {
  static const std::set<std::string> kKeys = [] {
    std::set<std::string> keys;
    for (const auto& [key, f] : fields()) keys.insert(key);
    return keys;
  }();
  return kKeys;
}

void TrainConfig::validate() const {
  if (!(clip_seconds > 0)) throw ConfigError("clip_seconds must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(g_lr > 0) || !(d_lr > 0) || !(finetune_lr > 0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (max_steps < 0 || finetune_steps < 0) throw ConfigError("step counts must be >= 0");
  if (d_layers < 1 || d_layers > 3) throw ConfigError("d_layers must be 1, 2 or 3");
  if (!(sigma > 0)) throw ConfigError("sigma must be positive");
  if (width_divisor < 1) throw ConfigError("width_divisor must be >= 1");
  if (!(grad_clip > 0)) throw ConfigError("grad_clip must be positive");
  if (!(loss_crop_seconds >= 0)) throw ConfigError("loss_crop_seconds must be >= 0");
  if (metrics_tail < 0) throw ConfigError("metrics_tail must be >= 0");
  if (no_motion && no_visual) throw ConfigError("no_motion and no_visual cannot both be set");
  weights.validate();
  if (!losses.adversarial && !losses.feature_matching && !losses.commitment && !losses.waveform &&
      !losses.mel) {
    throw ConfigError("every generator loss term is disabled");
  }
}

ModelConfig TrainConfig::model_config(int64_t motion_channels) const {
  ModelConfig m;
  m.level = level;
  m.sigma = sigma;
  m.scale_output = !no_scaling;
  m.width_divisor = width_divisor;
  m.motion_channels = motion_channels;
  m.use_motion = !no_motion;
  m.use_visual = !no_visual;
  m.discriminator_count = d_layers;
  m.reshape_for_discriminator = !no_reshape;
  m.validate();
  return m;
}

// --- Checkpoint --------------------------------------------------------------

Checkpoint::Checkpoint(TrainConfig cfg, int64_t motion_channels, CodecLevel codec_level)
    : config(std::move(cfg)), model(config.model_config(motion_channels)), codec(codec_level.clone()) {
  if (codec.level() != config.level) {
    throw ConfigError("codec level " + std::string(to_string(codec.level())) +
                      " does not match training level " + std::string(to_string(config.level)));
  }
  torch::manual_seed(config.seed);
  generator = Generator(model);
  discriminators = make_discriminators(model);
}

void Checkpoint::save(const std::filesystem::path& path) const {
  ArrayArchive archive;
  for (const auto& [k, v] : config.to_key_values()) archive.put_text("config." + k, v);
  archive.put_text("model.motion_channels", std::to_string(model.motion_channels));
  archive.put_text("train.step", std::to_string(step));
  std::string tail;
  for (const auto& line : metrics_tail) tail += line + "\n";
  archive.put_text("train.metrics_tail", tail);
  put_module(archive, "generator.", *generator);
  put_module(archive, "discriminators.", *discriminators);
  for (const auto& [k, v] : optimizer_state) archive.put("optim." + k, v);
  codec.to_archive(archive);
  archive.save(path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  const ArrayArchive archive = ArrayArchive::load(path);
  KeyValues kv;
  for (const auto& [k, v] : archive.texts()) {
    if (k.rfind("config.", 0) == 0) kv[k.substr(7)] = v;
  }
  TrainConfig cfg;
  int64_t motion_channels = 0;
  try {
    cfg = TrainConfig::from_key_values(kv);
    motion_channels = parse_int("model.motion_channels", archive.text("model.motion_channels"));
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": bad config echo: " + e.what());
  }
  Checkpoint ckpt(cfg, motion_channels, CodecLevel::from_archive(archive));
  load_module(archive, "generator.", *ckpt.generator);
  load_module(archive, "discriminators.", *ckpt.discriminators);
  ckpt.step = parse_int("train.step", archive.text("train.step"));
  std::istringstream tail(archive.text("train.metrics_tail"));
  for (std::string line; std::getline(tail, line);) ckpt.metrics_tail.push_back(line);
  for (const auto& [k, v] : archive.arrays()) {
    if (k.rfind("optim.", 0) == 0) ckpt.optimizer_state[k.substr(6)] = v.clone();
  }
  return ckpt;
}

// --- Training ----------------------------------------------------------------

std::vector<ClipSpan> training_spans(const DatasetManifest& manifest, Split split,
                                     double clip_seconds) {
  std::vector<ClipSpan> spans;
  const auto records = manifest.records_in(split);
  if (std::abs(clip_seconds - manifest.clip_seconds) < 1e-9) {
    for (const auto& r : records) spans.push_back({r.clip_id, r.song_id, r.start_seconds});
    return spans;
  }
  std::map<std::string, ClipRecord> extents;
  for (const auto& r : records) {
    auto [it, inserted] = extents.emplace(r.song_id, r);
    if (!inserted) {
      it->second.start_seconds = std::min(it->second.start_seconds, r.start_seconds);
      it->second.end_seconds = std::max(it->second.end_seconds, r.end_seconds);
    }
  }
  for (auto& [song, extent] : extents) {
    extent.clip_id = song;
    if (extent.duration() + 1e-9 < clip_seconds) continue;
    for (const auto& c : segment_clips(extent, clip_seconds, clip_seconds)) {
      spans.push_back({c.clip_id, song, c.start_seconds});
    }
  }
  return spans;
}

Checkpoint train_level(const TrainConfig& cfg, const DatasetManifest& manifest,
                       const CodecLevel& codec, const TrainIO& io) {
  cfg.validate();
  const auto spans = training_spans(manifest, Split::kTrain, cfg.clip_seconds);
  if (spans.empty()) {
    throw DataError("no training clips of " + format_double(cfg.clip_seconds) + " s in the manifest");
  }
  std::map<std::string, SongData> songs;
  for (const auto& r : manifest.records_in(Split::kTrain)) {
    if (!songs.count(r.song_id)) {
      songs.emplace(r.song_id, load_song(manifest, r, ClipLoadOptions{!cfg.no_visual}));
    }
  }
  const int64_t motion_channels = songs.begin()->second.motion.channels.size(0);

  Checkpoint ckpt(cfg, motion_channels, codec);
  if (cfg.max_steps == 0) return ckpt;

  CodecLevel frozen = codec.clone();
  for (auto& p : frozen.encoder->parameters()) p.set_requires_grad(false);
  for (auto& p : frozen.decoder->parameters()) p.set_requires_grad(false);
  const MelTransform mel(frozen.mel_params());

  auto& G = ckpt.generator;
  auto& D = ckpt.discriminators;
  G->train();
  D->train();
  const auto betas = std::make_tuple(cfg.beta1, cfg.beta2);
  torch::optim::Adam g_opt(trainable(G->parameters()), torch::optim::AdamOptions(cfg.g_lr).betas(betas));
  torch::optim::Adam d_opt(trainable(D->parameters()), torch::optim::AdamOptions(cfg.d_lr).betas(betas));

  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<size_t> order(spans.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();

  const bool use_d = cfg.losses.adversarial || cfg.losses.feature_matching;
  const bool decode = cfg.losses.waveform || cfg.losses.mel;
  const int64_t hop = hop_length(cfg.level);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto diverge = [&](int64_t step, const std::string& what) {
    ckpt.step = step;
    ckpt.optimizer_state.clear();
    capture_adam(g_opt, "g.", ckpt.optimizer_state);
    capture_adam(d_opt, "d.", ckpt.optimizer_state);
    std::string msg = "training diverged at step " + std::to_string(step) + ": " + what;
    if (!io.divergence_checkpoint.empty()) {
      ckpt.save(io.divergence_checkpoint);
      msg += "; last good checkpoint at " + io.divergence_checkpoint.string();
    }
    throw TrainingDiverged(msg, io.divergence_checkpoint);
  };

  for (int64_t step = 0; step < cfg.max_steps; ++step) {
    std::vector<ClipExample> batch;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const ClipSpan& span = spans[order[cursor++]];
      const SongData& song = songs.at(span.song_id);
      double start = span.start_seconds;
      if (cfg.random_offsets) {
        const int64_t last_frame = static_cast<int64_t>(
            std::floor((song.duration_seconds() - cfg.clip_seconds) * 60.0 + 1e-9));
        start = std::uniform_int_distribution<int64_t>(0, std::max<int64_t>(0, last_frame))(rng) / 60.0;
      }
      batch.push_back(cut_clip(song, start, cfg.clip_seconds, span.clip_id));
    }
    auto x = stack_field(batch, &ClipExample::audio);
    auto motion = stack_field(batch, &ClipExample::motion);
    auto visual = stack_field(batch, &ClipExample::visual);
    const int64_t n_codes = code_count(x.size(1), cfg.level);

    torch::Tensor phi, gt_quantized;
    {
      torch::NoGradGuard no_grad;
      phi = frozen.encode(x);
      gt_quantized = frozen.quantize(phi).quantized;
    }
    auto fake = G->forward(motion, visual, n_codes);

    double d_value = nan, d_norm = nan;
    if (use_d) {
      auto real_out = D->forward(discriminator_input(phi, ckpt.model));
      auto fake_out = D->forward(discriminator_input(fake.detach(), ckpt.model));
      auto d_loss = hinge_d_loss(scores_of(real_out), scores_of(fake_out));
      d_value = d_loss.item<double>();
      if (!std::isfinite(d_value)) diverge(step, "non-finite discriminator loss");
      d_opt.zero_grad();
      d_loss.backward();
      d_norm = torch::nn::utils::clip_grad_norm_(d_opt.param_groups()[0].params(), cfg.grad_clip);
      if (!std::isfinite(d_norm)) diverge(step, "non-finite discriminator gradient");
      d_opt.step();
    }

    LossTerms terms;
    if (use_d) {
      auto fake_out = D->forward(discriminator_input(fake, ckpt.model));
      if (cfg.losses.adversarial) terms.adversarial = hinge_g_loss(scores_of(fake_out));
      if (cfg.losses.feature_matching) {
        std::vector<std::vector<torch::Tensor>> real_features;
        {
          torch::NoGradGuard no_grad;
          real_features = features_of(D->forward(discriminator_input(phi, ckpt.model)));
        }
        terms.feature_matching = feature_matching_loss(real_features, features_of(fake_out));
      }
    }
    if (cfg.losses.commitment) terms.commitment = commitment_loss(fake, gt_quantized);
    if (decode) {
      auto decoded = frozen.decode(fake);
      auto reference = x.narrow(1, 0, n_codes * hop);
      const int64_t crop = std::llround(cfg.loss_crop_seconds * kSampleRate);
      if (crop > 0 && crop < decoded.size(1)) {
        const int64_t off = std::uniform_int_distribution<int64_t>(0, decoded.size(1) - crop)(rng);
        decoded = decoded.narrow(1, off, crop);
        reference = reference.narrow(1, off, crop);
      }
      if (cfg.losses.waveform) terms.waveform = waveform_loss(reference, decoded);
      if (cfg.losses.mel) terms.mel = mel_loss(reference, decoded, mel);
    }
    GeneratorLoss g;
    try {
      g = total_g_loss(terms, cfg.weights);
    } catch (const NumericError& e) {
      diverge(step, e.what());
    }
    g_opt.zero_grad();
    g.total.backward();
    const double g_norm =
        torch::nn::utils::clip_grad_norm_(g_opt.param_groups()[0].params(), cfg.grad_clip);
    if (!std::isfinite(g_norm)) diverge(step, "non-finite generator gradient");
    g_opt.step();

    nlohmann::ordered_json line;
    line["step"] = step + 1;
    auto put = [&](const char* key, bool on, double v) {
      line[key] = on && std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
    };
    const auto& r = g.report;
    put("d_loss", use_d, d_value);
    put("adversarial", r.enabled.adversarial, r.adversarial);
    put("feature_matching", r.enabled.feature_matching, r.feature_matching);
    put("commitment", r.enabled.commitment, r.commitment);
    put("waveform", r.enabled.waveform, r.waveform);
    put("mel", r.enabled.mel, r.mel);
    line["total"] = r.total;
    put("g_grad_norm", true, g_norm);
    put("d_grad_norm", use_d, d_norm);
    const std::string text = line.dump();
    if (io.metrics) *io.metrics << text << '\n';
    ckpt.metrics_tail.push_back(text);
    if (static_cast<int64_t>(ckpt.metrics_tail.size()) > cfg.metrics_tail) {
      ckpt.metrics_tail.erase(ckpt.metrics_tail.begin());
    }
    if (io.log && ((step + 1) % 50 == 0 || step + 1 == cfg.max_steps)) {
      *io.log << "step " << step + 1 << "/" << cfg.max_steps << " total " << r.total << '\n';
    }
  }
  if (io.metrics) io.metrics->flush();
  ckpt.step = cfg.max_steps;
  capture_adam(g_opt, "g.", ckpt.optimizer_state);
  capture_adam(d_opt, "d.", ckpt.optimizer_state);

  if (!cfg.no_finetune && cfg.finetune_steps > 0) {
    std::vector<Waveform> corpus;
    for (const auto& [id, song] : songs) {
      Waveform w;
      w.samples.assign(song.audio.data_ptr<float>(), song.audio.data_ptr<float>() + song.audio.numel());
      corpus.push_back(std::move(w));
    }
    FinetuneConfig ft;
    ft.steps = cfg.finetune_steps;
    ft.learning_rate = cfg.finetune_lr;
    ft.beta1 = cfg.beta1;
    ft.beta2 = cfg.beta2;
    ft.seed = cfg.seed;
    if (io.log) *io.log << "fine-tuning decoder for " << ft.steps << " steps\n";
    ckpt.codec = finetune_decoder(codec, corpus, ft);
  }
  return ckpt;
}

// --- Inference ---------------------------------------------------------------

GeneratedMusic generate_music(Checkpoint& ckpt, const torch::Tensor& motion,
                              const torch::Tensor& visual, bool denoise) {
  const auto& cfg = ckpt.config;
  const int64_t n_samples = std::llround(cfg.clip_seconds * kSampleRate);
  const int64_t n_codes = code_count(n_samples, cfg.level);
  const int64_t frames = std::llround(cfg.clip_seconds * 60.0);
  const int64_t windows = static_cast<int64_t>(std::ceil(cfg.clip_seconds / 0.5 - 1e-9));

  torch::Tensor m, v;
  if (ckpt.model.use_motion) {
    if (motion.dim() != 2 || motion.size(0) != ckpt.model.motion_channels) {
      throw DataError("motion must be [" + std::to_string(ckpt.model.motion_channels) + ", T]");
    }
    if (motion.size(1) < frames) {
      throw DataError("motion has " + std::to_string(motion.size(1)) + " frames; the clip needs " +
                      std::to_string(frames));
    }
    m = motion.narrow(1, 0, frames).unsqueeze(0);
  }
  if (ckpt.model.use_visual) {
    if (visual.dim() != 2 || visual.size(0) != kVisualFeatureDim) {
      throw DataError("visual features must be [1024, T]");
    }
    if (visual.size(1) < windows) {
      throw DataError("visual features have " + std::to_string(visual.size(1)) +
                      " windows; the clip needs " + std::to_string(windows));
    }
    v = visual.narrow(1, 0, windows).unsqueeze(0);
  }

  torch::NoGradGuard no_grad;
  ckpt.generator->eval();
  GeneratedMusic out;
  out.features = ckpt.generator->forward(m, v, n_codes).squeeze(0);
  auto q = ckpt.codec.quantize(out.features);
  out.indices = q.indices;
  auto audio = ckpt.codec.decode(q.quantized).contiguous();
  out.audio.samples.assign(audio.data_ptr<float>(), audio.data_ptr<float>() + audio.numel());
  if (denoise) out.audio = spectral_denoise(out.audio);
  return out;
}

}  // namespace m2m
