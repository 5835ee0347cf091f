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

// Per-level VQ-VAE audio codec: strided conv encoder, 64-dim codebook and a
// mirrored transposed-conv decoder. The encoder's total stride equals the
// level hop (128 = 4*4*8, 32 = 4*8), so a clip of n samples maps to
// floor(n / hop) codes and decodes back to floor(n / hop) * hop samples.

#ifndef M2M_VQ_CODEC_HPP_
#define M2M_VQ_CODEC_HPP_

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "m2m/archive.hpp"
#include "m2m/audio.hpp"
#include "m2m/common.hpp"

namespace m2m {

struct CodecConfig {
  Level level = Level::kHigh;
  int64_t codebook_size = 512;
  std::vector<int64_t> strides;
  /// One more entry than strides: width before each downsampling and after
  /// the last.
  std::vector<int64_t> channels;
  double leaky_slope = 0.2;

  /// Default layout for a level.
  static CodecConfig for_level(Level level);
  int64_t hop() const;
  /// Throws ConfigError when the strides do not multiply to the level hop.
  void validate() const;
};

/// [B, 1, N] -> [B, 64, floor(N / hop)].
class CodecEncoderImpl : public torch::nn::Cloneable<CodecEncoderImpl> {
 public:
  explicit CodecEncoderImpl(const CodecConfig& cfg);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& audio);

 private:
  CodecConfig cfg_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(CodecEncoder);

/// [B, 64, T] -> [B, 1, T * hop] in (-1, 1).
class CodecDecoderImpl : public torch::nn::Cloneable<CodecDecoderImpl> {
 public:
  explicit CodecDecoderImpl(const CodecConfig& cfg);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& features);

 private:
  CodecConfig cfg_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(CodecDecoder);

struct QuantizeResult {
  /// [T] or [B, T], int64.
  torch::Tensor indices;
  /// Same shape as the input features.
  torch::Tensor quantized;
};

/// Index of the nearest codebook row (squared L2) for every column of a
/// [D, T] or [B, D, T] feature tensor. Ties go to the lowest index.
torch::Tensor nearest_codes(const torch::Tensor& features, const torch::Tensor& codebook);

/// Codebook rows for the given indices, laid out as [D, T] or [B, D, T].
torch::Tensor lookup(const torch::Tensor& indices, const torch::Tensor& codebook);

/// nearest_codes followed by lookup. Throws DataError on a dimension mismatch.
QuantizeResult quantize(const torch::Tensor& features, const torch::Tensor& codebook);

/// A sequence of VQ features for one clip.
struct VQSequence {
  /// [64, T]
  torch::Tensor features;
  Level level = Level::kHigh;

  int64_t hop() const { return hop_length(level); }
  int64_t length() const { return features.size(1); }
};

class CodecLevel {
 public:
  /// Parameters are drawn from torch's global generator after seeding it
  /// with `seed`. The codebook starts as zeros until pretraining sets it.
  explicit CodecLevel(CodecConfig cfg = CodecConfig::for_level(Level::kHigh), uint64_t seed = 0);

  const CodecConfig& config() const { return cfg_; }
  Level level() const { return cfg_.level; }
  int64_t hop() const { return cfg_.hop(); }
  const MelParams& mel_params() const { return mel_; }

  /// [N] -> [64, T] or [B, N] -> [B, 64, T]. Throws DataError when shorter
  /// than one hop.
  torch::Tensor encode(const torch::Tensor& audio);
  QuantizeResult quantize(const torch::Tensor& features) const;
  /// [64, T] -> [T * hop] or [B, 64, T] -> [B, T * hop], clamped to
  /// [-1, 1]. Differentiable with respect to the features.
  torch::Tensor decode(const torch::Tensor& features);

  VQSequence encode(const Waveform& wave);
  Waveform decode(const VQSequence& sequence);

  /// Deep copy: parameters and codebook share no storage with this codec.
  CodecLevel clone() const;

  void to_archive(ArrayArchive& archive) const;
  static CodecLevel from_archive(const ArrayArchive& archive);
  void save(const std::filesystem::path& path) const;
  static CodecLevel load(const std::filesystem::path& path);

  CodecEncoder encoder{nullptr};
  CodecDecoder decoder{nullptr};
  /// [K, 64] float32.
  torch::Tensor codebook;

 private:
  CodecConfig cfg_;
  MelParams mel_;
};

struct PretrainConfig {
  int64_t steps = 500;
  int64_t batch_size = 8;
  int64_t crop_samples = 8192;
  double learning_rate = 1e-3;
  double ema_decay = 0.99;
  double commitment_weight = 0.25;
  /// Entries unused for this many consecutive steps are re-seeded from the
  /// current batch's encoder outputs.
  int64_t dead_code_steps = 200;
  uint64_t seed = 0;
};

struct PretrainReport {
  /// Training objective per step.
  std::vector<double> losses;
  /// Mean L1 of decode(quantize(encode(x))) on the held-out clips, after
  /// codebook initialization and after the last step. NaN without held-out data.
  double initial_heldout_l1 = 0.0;
  double final_heldout_l1 = 0.0;
};

/// EMA VQ-VAE training: L1 reconstruction through a straight-through
/// quantizer plus commitment_weight * mean squared commitment. The codebook
/// is initialized from the first batch of encoder outputs. Throws DataError
/// for an empty corpus and NumericError on a non-finite loss.
PretrainReport pretrain_codec(CodecLevel& codec, const std::vector<Waveform>& corpus,
                              const PretrainConfig& cfg,
                              const std::vector<Waveform>& heldout = {});

struct FinetuneConfig {
  int64_t steps = 200;
  int64_t batch_size = 4;
  int64_t crop_samples = 8192;
  double learning_rate = 1e-5;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double feature_matching_weight = 10.0;
  double mel_weight = 45.0;
  int64_t discriminator_divisor = 4;
  uint64_t seed = 0;
};

struct FinetuneReport {
  std::vector<double> generator_losses;
  std::vector<double> discriminator_losses;
};

/// Adversarial fine-tuning of a copy of the decoder against multi-scale
/// waveform discriminators (hinge + feature matching + mel L1). The encoder
/// and codebook of the returned codec are identical to the input's.
CodecLevel finetune_decoder(const CodecLevel& codec, const std::vector<Waveform>& corpus,
                            const FinetuneConfig& cfg, FinetuneReport* report = nullptr);

/// Share of codebook entries selected at least once over the corpus.
double codebook_usage(CodecLevel& codec, const std::vector<Waveform>& corpus);

/// Mean absolute error of decode(quantize(encode(x))) against x.
double reconstruction_l1(CodecLevel& codec, const std::vector<Waveform>& corpus);

/// Mean mel L1 between x and its reconstruction.
double reconstruction_mel_l1(CodecLevel& codec, const std::vector<Waveform>& corpus);

}  // namespace m2m

#endif  // M2M_VQ_CODEC_HPP_
