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

// Per-level adversarial training, checkpoints and inference.
//
// One training step: encode the ground-truth clip with the frozen codec,
// run the generator once, update the discriminators on (phi(x_a), G.detach()),
// then update the generator on the weighted objective. The waveform and mel
// terms decode the generator's continuous output with the frozen decoder, so
// gradients reach the generator through the synthesizer.

#ifndef M2M_TRAINING_HPP_
#define M2M_TRAINING_HPP_

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "m2m/config.hpp"
#include "m2m/data.hpp"
#include "m2m/losses.hpp"
#include "m2m/model.hpp"
#include "m2m/vq_codec.hpp"

namespace m2m {

struct TrainConfig {
  Level level = Level::kHigh;
  double clip_seconds = 2.0;
  int64_t batch_size = 16;
  double g_lr = 1e-4;
  double d_lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  /// Decoder fine-tuning after generator training; skipped by no_finetune.
  double finetune_lr = 1e-5;
  int64_t finetune_steps = 100;
  int64_t max_steps = 1000;
  uint64_t seed = 0;
  LossWeights weights;
  LossToggles losses;
  bool no_motion = false;
  bool no_visual = false;
  int64_t d_layers = 3;
  bool no_scaling = false;
  bool no_reshape = false;
  bool no_finetune = false;
  double sigma = 100.0;
  int64_t width_divisor = 1;
  double grad_clip = 10.0;
  /// Restricts the waveform and mel terms to a random contiguous crop of
  /// this many seconds; 0 uses the full clip.
  double loss_crop_seconds = 0.0;
  /// Samples clip starts uniformly within each song instead of the
  /// fixed-stride segmentation.
  bool random_offsets = false;
  /// Number of metric lines kept in a checkpoint.
  int64_t metrics_tail = 20;
  std::string manifest;
  std::string codec;

  /// Every key with its current value.
  KeyValues to_key_values() const;
  /// Starts from the defaults; throws ConfigError for unknown keys or bad values.
  static TrainConfig from_key_values(const KeyValues& values);
  static const std::set<std::string>& known_keys();
  void validate() const;
  ModelConfig model_config(int64_t motion_channels) const;
};

class Checkpoint {
 public:
  /// Seeds torch with config.seed and builds fresh networks.
  Checkpoint(TrainConfig config, int64_t motion_channels, CodecLevel codec);

  TrainConfig config;
  ModelConfig model;
  Generator generator{nullptr};
  DiscriminatorSet discriminators{nullptr};
  /// The codec used to decode generated features (fine-tuned decoder when
  /// fine-tuning ran).
  CodecLevel codec;
  int64_t step = 0;
  std::vector<std::string> metrics_tail;
  /// Adam moments and step counts, keyed "g.<i>.exp_avg" etc.
  std::map<std::string, torch::Tensor> optimizer_state;

  void save(const std::filesystem::path& path) const;
  /// Throws DataError on a corrupt or truncated archive.
  static Checkpoint load(const std::filesystem::path& path);
};

/// Raised when a loss or gradient norm turns non-finite. No update from the
/// failing step has been applied to the saved checkpoint.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::filesystem::path checkpoint)
      : NumericError(what), checkpoint_path(std::move(checkpoint)) {}
  std::filesystem::path checkpoint_path;
};

struct TrainIO {
  /// One JSON object per step.
  std::ostream* metrics = nullptr;
  /// Where the last good checkpoint goes on divergence; empty disables it.
  std::filesystem::path divergence_checkpoint;
  /// Progress lines; may be null.
  std::ostream* log = nullptr;
};

/// Clips used for training at cfg.clip_seconds: the manifest records when
/// their length matches, otherwise fixed-stride windows over each song.
struct ClipSpan {
  std::string clip_id;
  std::string song_id;
  double start_seconds = 0.0;
};
std::vector<ClipSpan> training_spans(const DatasetManifest& manifest, Split split,
                                     double clip_seconds);

/// Trains one level. `codec` is not modified. Throws DataError for an empty
/// training split and TrainingDiverged on a non-finite loss.
Checkpoint train_level(const TrainConfig& cfg, const DatasetManifest& manifest,
                       const CodecLevel& codec, const TrainIO& io = {});

struct GeneratedMusic {
  Waveform audio;
  /// [T] codebook indices.
  torch::Tensor indices;
  /// [64, T] generator output before lookup.
  torch::Tensor features;
};

/// Generator -> quantize -> decode -> optional spectral denoise for one clip
/// of config.clip_seconds. motion [C_m, T_m] at 60 fps, visual [1024, T_v]
/// at 0.5 s windows; longer inputs are cropped. Throws DataError when an
/// enabled stream is shorter than the clip.
GeneratedMusic generate_music(Checkpoint& checkpoint, const torch::Tensor& motion,
                              const torch::Tensor& visual, bool denoise = false);

}  // namespace m2m

#endif  // M2M_TRAINING_HPP_
