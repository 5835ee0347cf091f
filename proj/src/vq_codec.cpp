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

#include "m2m/vq_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "m2m/config.hpp"
#include "m2m/losses.hpp"
#include "m2m/model.hpp"

namespace m2m {
namespace {

torch::nn::LeakyReLU leaky(double slope) {
  return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(slope));
}

// x + conv1(lrelu(conv3(lrelu(x)))).
class CodecResidualImpl : public torch::nn::Cloneable<CodecResidualImpl> {
 public:
  CodecResidualImpl(int64_t channels, double slope) : channels_(channels), slope_(slope) {
    reset();
  }
  void reset() override {
    conv3_ = register_module(
        "conv3", torch::nn::Conv1d(torch::nn::Conv1dOptions(channels_, channels_, 3).padding(1)));
    conv1_ = register_module("conv1",
                             torch::nn::Conv1d(torch::nn::Conv1dOptions(channels_, channels_, 1)));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    const auto opts = torch::nn::functional::LeakyReLUFuncOptions().negative_slope(slope_);
    auto h = conv3_->forward(torch::nn::functional::leaky_relu(x, opts));
    return x + conv1_->forward(torch::nn::functional::leaky_relu(h, opts));
  }

 private:
  int64_t channels_;
  double slope_;
  torch::nn::Conv1d conv3_{nullptr}, conv1_{nullptr};
};
TORCH_MODULE(CodecResidual);

std::string join(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int64_t> split_ints(const std::string& key, const std::string& text) {
  std::vector<int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
  return out;
}

torch::Tensor as_batch(const torch::Tensor& audio) {
  return audio.dim() == 1 ? audio.unsqueeze(0) : audio;
}

torch::Tensor waveform_tensor(const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) {
    throw DataError("codec expects " + std::to_string(kSampleRate) + " Hz audio, got " +
                    std::to_string(wave.sample_rate));
  }
  return torch::from_blob(const_cast<float*>(wave.samples.data()),
                          {static_cast<int64_t>(wave.size())}, torch::kFloat32)
      .clone();
}

// Random crops of `crop` samples from the corpus, [B, crop].
torch::Tensor sample_batch(const std::vector<torch::Tensor>& clips, int64_t batch, int64_t crop,
                           std::mt19937_64& rng) {
  std::vector<torch::Tensor> rows;
  std::uniform_int_distribution<size_t> pick(0, clips.size() - 1);
  for (int64_t b = 0; b < batch; ++b) {
    const auto& clip = clips[pick(rng)];
    std::uniform_int_distribution<int64_t> offset(0, clip.size(0) - crop);
    rows.push_back(clip.narrow(0, offset(rng), crop));
  }
  return torch::stack(rows);
}

std::vector<torch::Tensor> corpus_tensors(const std::vector<Waveform>& corpus, int64_t& crop,
                                          int64_t hop) {
  if (corpus.empty()) throw DataError("codec training corpus is empty");
  std::vector<torch::Tensor> clips;
  int64_t shortest = std::numeric_limits<int64_t>::max();
  for (const auto& w : corpus) {
    clips.push_back(waveform_tensor(w));
    shortest = std::min<int64_t>(shortest, static_cast<int64_t>(w.size()));
  }
  crop = (std::min(crop, shortest) / hop) * hop;
  if (crop < hop) throw DataError("codec training clips are shorter than one hop");
  return clips;
}

}  // namespace

// --- CodecConfig -------------------------------------------------------------

CodecConfig CodecConfig::for_level(Level level) {
  CodecConfig cfg;
  cfg.level = level;
  if (level == Level::kHigh) {
    cfg.strides = {4, 4, 8};
    cfg.channels = {16, 32, 64, 128};
  } else {
    cfg.strides = {4, 8};
    cfg.channels = {16, 32, 64};
  }
  return cfg;
}

int64_t CodecConfig::hop() const {
  return std::accumulate(strides.begin(), strides.end(), int64_t{1}, std::multiplies<>());
}

void CodecConfig::validate() const {
  if (codebook_size < 1) throw ConfigError("codebook size must be >= 1");
  if (strides.empty() || channels.size() != strides.size() + 1) {
    throw ConfigError("codec needs one more channel width than strides");
  }
  for (int64_t s : strides) {
    if (s < 2 || s % 2 != 0) throw ConfigError("codec strides must be even and >= 2");
  }
  for (int64_t c : channels) {
    if (c < 1) throw ConfigError("codec channel widths must be >= 1");
  }
  if (hop() != hop_length(level)) {
    throw ConfigError("codec strides multiply to " + std::to_string(hop()) + ", level " +
                      std::string(to_string(level)) + " needs " +
                      std::to_string(hop_length(level)));
  }
}

// --- Encoder / decoder -------------------------------------------------------

CodecEncoderImpl::CodecEncoderImpl(const CodecConfig& cfg) : cfg_(cfg) { reset(); }

void CodecEncoderImpl::reset() {
  const double s = cfg_.leaky_slope;
  torch::nn::Sequential seq;
  seq->push_back(torch::nn::Conv1d(torch::nn::Conv1dOptions(1, cfg_.channels[0], 7).padding(3)));
  for (size_t i = 0; i < cfg_.strides.size(); ++i) {
    const int64_t st = cfg_.strides[i];
    seq->push_back(CodecResidual(cfg_.channels[i], s));
    seq->push_back(leaky(s));
    seq->push_back(torch::nn::Conv1d(
        torch::nn::Conv1dOptions(cfg_.channels[i], cfg_.channels[i + 1], 2 * st)
            .stride(st)
            .padding(st / 2)));
  }
  seq->push_back(leaky(s));
  seq->push_back(
      torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg_.channels.back(), kCodeDim, 3).padding(1)));
  body_ = register_module("body", seq);
}

torch::Tensor CodecEncoderImpl::forward(const torch::Tensor& audio) { return body_->forward(audio); }

CodecDecoderImpl::CodecDecoderImpl(const CodecConfig& cfg) : cfg_(cfg) { reset(); }

void CodecDecoderImpl::reset() {
  const double s = cfg_.leaky_slope;
  torch::nn::Sequential seq;
  seq->push_back(
      torch::nn::Conv1d(torch::nn::Conv1dOptions(kCodeDim, cfg_.channels.back(), 7).padding(3)));
  for (size_t i = cfg_.strides.size(); i-- > 0;) {
    const int64_t st = cfg_.strides[i];
    seq->push_back(leaky(s));
    seq->push_back(torch::nn::ConvTranspose1d(
        torch::nn::ConvTranspose1dOptions(cfg_.channels[i + 1], cfg_.channels[i], 2 * st)
            .stride(st)
            .padding(st / 2)));
    seq->push_back(CodecResidual(cfg_.channels[i], s));
  }
  seq->push_back(leaky(s));
  seq->push_back(torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg_.channels[0], 1, 7).padding(3)));
  seq->push_back(torch::nn::Tanh());
  body_ = register_module("body", seq);
}

torch::Tensor CodecDecoderImpl::forward(const torch::Tensor& features) {
  return body_->forward(features);
}

// --- Quantization ------------------------------------------------------------

torch::Tensor nearest_codes(const torch::Tensor& features, const torch::Tensor& codebook) {
  if (codebook.dim() != 2 || codebook.size(0) < 1) {
    throw DataError("codebook must be a non-empty [K, D] matrix");
  }
  const bool batched = features.dim() == 3;
  if ((features.dim() != 2 && !batched) || features.size(-2) != codebook.size(1)) {
    throw DataError("feature dimension " + std::to_string(features.size(-2)) +
                    " does not match codebook dimension " + std::to_string(codebook.size(1)));
  }
  torch::NoGradGuard no_grad;
  const int64_t d = codebook.size(1);
  auto cols = (batched ? features : features.unsqueeze(0))
                  .transpose(1, 2)
                  .reshape({-1, d})
                  .to(torch::kFloat64);
  auto cb = codebook.to(torch::kFloat64);
  auto dist = cols.pow(2).sum(1, true) - 2.0 * cols.matmul(cb.t()) + cb.pow(2).sum(1).unsqueeze(0);
  auto idx = dist.argmin(1);
  return batched ? idx.reshape({features.size(0), features.size(2)}) : idx;
}

torch::Tensor lookup(const torch::Tensor& indices, const torch::Tensor& codebook) {
  auto rows = codebook.index_select(0, indices.reshape({-1}));
  if (indices.dim() == 1) return rows.t().contiguous();
  return rows.reshape({indices.size(0), indices.size(1), codebook.size(1)})
      .transpose(1, 2)
      .contiguous();
}

QuantizeResult quantize(const torch::Tensor& features, const torch::Tensor& codebook) {
  QuantizeResult r;
  r.indices = nearest_codes(features, codebook);
  r.quantized = lookup(r.indices, codebook.to(features.scalar_type()));
  return r;
}

// --- CodecLevel --------------------------------------------------------------

CodecLevel::CodecLevel(CodecConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  torch::manual_seed(seed);
  encoder = CodecEncoder(cfg_);
  decoder = CodecDecoder(cfg_);
  codebook = torch::zeros({cfg_.codebook_size, kCodeDim});
}

torch::Tensor CodecLevel::encode(const torch::Tensor& audio) {
  if (audio.size(-1) < hop()) {
    throw DataError("clip of " + std::to_string(audio.size(-1)) +
                    " samples is shorter than one hop (" + std::to_string(hop()) + ")");
  }
  auto z = encoder->forward(as_batch(audio).unsqueeze(1));
  return audio.dim() == 1 ? z.squeeze(0) : z;
}

QuantizeResult CodecLevel::quantize(const torch::Tensor& features) const {
  return m2m::quantize(features, codebook);
}

torch::Tensor CodecLevel::decode(const torch::Tensor& features) {
  if (features.size(-2) != kCodeDim) throw DataError("decode expects 64-dim features");
  auto f = features.dim() == 2 ? features.unsqueeze(0) : features;
  auto y = decoder->forward(f).squeeze(1).clamp(-1.0, 1.0);
  return features.dim() == 2 ? y.squeeze(0) : y;
}

VQSequence CodecLevel::encode(const Waveform& wave) {
  torch::NoGradGuard no_grad;
  return VQSequence{encode(waveform_tensor(wave)), cfg_.level};
}

Waveform CodecLevel::decode(const VQSequence& sequence) {
  if (sequence.level != cfg_.level) {
    throw DataError("sequence level " + std::string(to_string(sequence.level)) +
                    " does not match codec level " + std::string(to_string(cfg_.level)));
  }
  torch::NoGradGuard no_grad;
  auto y = decode(sequence.features).contiguous();
  Waveform out;
  out.samples.assign(y.data_ptr<float>(), y.data_ptr<float>() + y.numel());
  return out;
}

CodecLevel CodecLevel::clone() const {
  CodecLevel copy(*this);
  copy.encoder = std::dynamic_pointer_cast<CodecEncoderImpl>(encoder->clone());
  copy.decoder = std::dynamic_pointer_cast<CodecDecoderImpl>(decoder->clone());
  copy.codebook = codebook.clone();
  return copy;
}

void CodecLevel::to_archive(ArrayArchive& archive) const {
  archive.put_text("codec.level", std::string(to_string(cfg_.level)));
  archive.put_text("codec.codebook_size", std::to_string(cfg_.codebook_size));
  archive.put_text("codec.dim", std::to_string(kCodeDim));
  archive.put_text("codec.hop", std::to_string(hop()));
  archive.put_text("codec.strides", join(cfg_.strides));
  archive.put_text("codec.channels", join(cfg_.channels));
  archive.put_text("codec.leaky_slope", format_double(cfg_.leaky_slope));
  for (const auto& [k, v] : mel_.to_key_values()) archive.put_text(k, v);
  archive.put("codec.codebook", codebook);
  put_module(archive, "codec.encoder.", *encoder);
  put_module(archive, "codec.decoder.", *decoder);
}

CodecLevel CodecLevel::from_archive(const ArrayArchive& archive) {
  CodecConfig cfg;
  try {
    cfg.level = parse_level(archive.text("codec.level"));
  } catch (const ConfigError& e) {
    throw DataError(std::string("codec archive: ") + e.what());
  }
  try {
    cfg.codebook_size = parse_int("codec.codebook_size", archive.text("codec.codebook_size"));
    cfg.strides = split_ints("codec.strides", archive.text("codec.strides"));
    cfg.channels = split_ints("codec.channels", archive.text("codec.channels"));
    cfg.leaky_slope = parse_double("codec.leaky_slope", archive.text("codec.leaky_slope"));
    if (parse_int("codec.dim", archive.text("codec.dim")) != kCodeDim) {
      throw DataError("codec archive: entry dimension is not 64");
    }
    cfg.validate();
    if (parse_int("codec.hop", archive.text("codec.hop")) != cfg.hop()) {
      throw DataError("codec archive: hop disagrees with strides");
    }
  } catch (const ConfigError& e) {
    throw DataError(std::string("codec archive: ") + e.what());
  }
  CodecLevel codec(cfg);
  std::map<std::string, std::string> mel_keys;
  for (const auto& [k, v] : archive.texts()) {
    if (k.rfind("mel.", 0) == 0) mel_keys[k] = v;
  }
  codec.mel_ = MelParams::from_key_values(mel_keys);
  const auto& cb = archive.get("codec.codebook");
  if (cb.sizes() != codec.codebook.sizes()) throw DataError("codec archive: codebook shape mismatch");
  codec.codebook = cb.clone();
  load_module(archive, "codec.encoder.", *codec.encoder);
  load_module(archive, "codec.decoder.", *codec.decoder);
  return codec;
}

void CodecLevel::save(const std::filesystem::path& path) const {
  ArrayArchive archive;
  to_archive(archive);
  archive.save(path);
}

CodecLevel CodecLevel::load(const std::filesystem::path& path) {
  return from_archive(ArrayArchive::load(path));
}

// --- Pretraining -------------------------------------------------------------

PretrainReport pretrain_codec(CodecLevel& codec, const std::vector<Waveform>& corpus,
                              const PretrainConfig& cfg, const std::vector<Waveform>& heldout) {
  int64_t crop = cfg.crop_samples;
  const auto clips = corpus_tensors(corpus, crop, codec.hop());
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  torch::manual_seed(cfg.seed);

  std::vector<torch::Tensor> params = codec.encoder->parameters();
  for (auto& p : codec.decoder->parameters()) params.push_back(p);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.learning_rate));

  const int64_t k = codec.codebook.size(0);
  auto ema_count = torch::ones({k});
  auto ema_sum = codec.codebook.clone();
  auto unused = torch::zeros({k}, torch::kInt64);

  PretrainReport report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.initial_heldout_l1 = report.final_heldout_l1 = nan;

  for (int64_t step = 0; step < cfg.steps; ++step) {
    auto x = sample_batch(clips, cfg.batch_size, crop, rng);
    auto z = codec.encoder->forward(x.unsqueeze(1));
    auto flat = z.detach().transpose(1, 2).reshape({-1, kCodeDim});
    const int64_t n = flat.size(0);

    torch::NoGradGuard outer_guard;
    if (step == 0) {
      // Seed the codebook with distinct encoder outputs from the first batch.
      if (n >= k) {
        std::vector<int64_t> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(static_cast<size_t>(k));
        codec.codebook = flat.index_select(0, torch::tensor(order)).clone();
      } else {
        std::uniform_int_distribution<int64_t> pick(0, n - 1);
        std::vector<int64_t> rows(static_cast<size_t>(k));
        for (auto& r : rows) r = pick(rng);
        codec.codebook = flat.index_select(0, torch::tensor(rows)) + 0.01 * torch::randn({k, kCodeDim});
      }
      ema_sum = codec.codebook.clone();
      ema_count = torch::ones({k});
      if (!heldout.empty()) report.initial_heldout_l1 = reconstruction_l1(codec, heldout);
    }

    auto idx = nearest_codes(z.detach(), codec.codebook);
    auto q = lookup(idx, codec.codebook);

    // EMA codebook update with Laplace-smoothed counts.
    auto onehot = torch::one_hot(idx.reshape({-1}), k).to(torch::kFloat32);
    auto counts = onehot.sum(0);
    ema_count.mul_(cfg.ema_decay).add_(counts, 1.0 - cfg.ema_decay);
    ema_sum.mul_(cfg.ema_decay).add_(onehot.t().matmul(flat), 1.0 - cfg.ema_decay);
    const double total = ema_count.sum().item<double>();
    auto smoothed = (ema_count + 1e-5) / (total + k * 1e-5) * total;
    codec.codebook = ema_sum / smoothed.unsqueeze(1);

    unused = torch::where(counts > 0, torch::zeros_like(unused), unused + 1);
    auto dead = (unused >= cfg.dead_code_steps).nonzero().reshape({-1});
    if (dead.numel() > 0) {
      std::uniform_int_distribution<int64_t> pick(0, n - 1);
      std::vector<int64_t> rows(static_cast<size_t>(dead.numel()));
      for (auto& r : rows) r = pick(rng);
      auto fresh = flat.index_select(0, torch::tensor(rows));
      codec.codebook.index_copy_(0, dead, fresh);
      ema_sum.index_copy_(0, dead, fresh);
      ema_count.index_fill_(0, dead, 1.0);
      unused.index_fill_(0, dead, 0);
    }

    torch::Tensor loss;
    {
      torch::AutoGradMode enable(true);
      auto straight = z + (q - z).detach();
      auto y = codec.decoder->forward(straight).squeeze(1);
      loss = (y - x).abs().mean() + cfg.commitment_weight * (z - q).pow(2).mean();
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw NumericError("codec pretraining diverged at step " + std::to_string(step));
      }
      report.losses.push_back(value);
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  if (!heldout.empty()) report.final_heldout_l1 = reconstruction_l1(codec, heldout);
  return report;
}

// --- Decoder fine-tuning -----------------------------------------------------

CodecLevel finetune_decoder(const CodecLevel& codec, const std::vector<Waveform>& corpus,
                            const FinetuneConfig& cfg, FinetuneReport* report) {
  CodecLevel out = codec.clone();
  if (cfg.steps <= 0) return out;
  int64_t crop = cfg.crop_samples;
  const auto clips = corpus_tensors(corpus, crop, out.hop());
  std::mt19937_64 rng(cfg.seed);
  torch::manual_seed(cfg.seed);

  DiscriminatorSet disc(3, 1, cfg.discriminator_divisor);
  const auto betas = std::make_tuple(cfg.beta1, cfg.beta2);
  torch::optim::Adam g_opt(out.decoder->parameters(),
                           torch::optim::AdamOptions(cfg.learning_rate).betas(betas));
  torch::optim::Adam d_opt(disc->parameters(),
                           torch::optim::AdamOptions(cfg.learning_rate).betas(betas));
  const MelTransform mel(out.mel_params());

  for (int64_t step = 0; step < cfg.steps; ++step) {
    auto x = sample_batch(clips, cfg.batch_size, crop, rng);
    torch::Tensor q;
    {
      torch::NoGradGuard no_grad;
      q = out.quantize(out.encode(x)).quantized;
    }
    auto y = out.decode(q);

    auto real_out = disc->forward(x.unsqueeze(1));
    auto fake_out = disc->forward(y.detach().unsqueeze(1));
    auto d_loss = hinge_d_loss(scores_of(real_out), scores_of(fake_out));
    d_opt.zero_grad();
    d_loss.backward();
    d_opt.step();

    fake_out = disc->forward(y.unsqueeze(1));
    std::vector<std::vector<torch::Tensor>> real_features;
    {
      torch::NoGradGuard no_grad;
      real_features = features_of(disc->forward(x.unsqueeze(1)));
    }
    auto g_loss = hinge_g_loss(scores_of(fake_out)) +
                  cfg.feature_matching_weight * feature_matching_loss(real_features, features_of(fake_out)) +
                  cfg.mel_weight * mel_loss(x, y, mel);
    const double g_value = g_loss.item<double>();
    const double d_value = d_loss.item<double>();
    if (!std::isfinite(g_value) || !std::isfinite(d_value)) {
      throw NumericError("decoder fine-tuning diverged at step " + std::to_string(step));
    }
    g_opt.zero_grad();
    g_loss.backward();
    g_opt.step();
    if (report) {
      report->generator_losses.push_back(g_value);
      report->discriminator_losses.push_back(d_value);
    }
  }
  return out;
}

// --- Metrics -----------------------------------------------------------------

double codebook_usage(CodecLevel& codec, const std::vector<Waveform>& corpus) {
  torch::NoGradGuard no_grad;
  std::set<int64_t> used;
  for (const auto& w : corpus) {
    auto idx = codec.quantize(codec.encode(waveform_tensor(w))).indices.contiguous();
    used.insert(idx.data_ptr<int64_t>(), idx.data_ptr<int64_t>() + idx.numel());
  }
  return static_cast<double>(used.size()) / static_cast<double>(codec.codebook.size(0));
}

double reconstruction_l1(CodecLevel& codec, const std::vector<Waveform>& corpus) {
  torch::NoGradGuard no_grad;
  if (corpus.empty()) throw DataError("reconstruction_l1: empty corpus");
  double sum = 0.0;
  for (const auto& w : corpus) {
    auto x = waveform_tensor(w);
    auto y = codec.decode(codec.quantize(codec.encode(x)).quantized);
    sum += waveform_loss(x, y).item<double>();
  }
  return sum / static_cast<double>(corpus.size());
}

double reconstruction_mel_l1(CodecLevel& codec, const std::vector<Waveform>& corpus) {
  torch::NoGradGuard no_grad;
  if (corpus.empty()) throw DataError("reconstruction_mel_l1: empty corpus");
  const MelTransform mel(codec.mel_params());
  double sum = 0.0;
  for (const auto& w : corpus) {
    auto x = waveform_tensor(w);
    auto y = codec.decode(codec.quantize(codec.encode(x)).quantized);
    sum += mel_loss(x, y, mel).item<double>();
  }
  return sum / static_cast<double>(corpus.size());
}

}  // namespace m2m
