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

// Generator and discriminator networks.
//
// The generator maps (motion, visual) conditioning to a [64 x T] sequence of
// continuous VQ features bounded by +-sigma. The motion encoder, the high and
// low level VQ generators, the residual stack and the discriminator block
// follow fixed layer tables; every channel width except the 64-wide output is
// divided by ModelConfig::width_divisor so the same topology can be trained at
// desk scale.
//
// Tensors are batch-first, channels-second: [B, C, T].

#ifndef M2M_MODEL_HPP_
#define M2M_MODEL_HPP_

#include <torch/torch.h>

#include <string>
#include <vector>

#include "m2m/common.hpp"

namespace m2m {

enum class MotionRepresentation { kKeypoints2d, kSmpl };

/// 34 for 17 (x, y) keypoints, 75 for 24 axis-angle joints + root translation.
int64_t motion_channels(MotionRepresentation rep);
std::string_view to_string(MotionRepresentation rep);
MotionRepresentation parse_motion_representation(std::string_view text);

inline constexpr int64_t kVisualFeatureDim = 1024;

struct MotionSequence {
  /// [C_m, T_m]
  torch::Tensor channels;
  double fps = 60.0;
  MotionRepresentation representation = MotionRepresentation::kKeypoints2d;

  int64_t frames() const { return channels.size(1); }
};

struct VisualFeatureSequence {
  /// [1024, T_v]
  torch::Tensor features;
  double window_seconds = 0.5;

  int64_t windows() const { return features.size(1); }
};

struct ModelConfig {
  Level level = Level::kHigh;
  double sigma = 100.0;
  /// Off reproduces the "without scaling" ablation: outputs stay in (-1, 1).
  bool scale_output = true;
  int64_t width_divisor = 1;
  int64_t motion_channels = 34;
  int64_t visual_channels = kVisualFeatureDim;
  bool use_motion = true;
  bool use_visual = true;
  /// Number of discriminator scales (1 to 3).
  int64_t discriminator_count = 3;
  /// Off feeds the [64 x T] features as 64 channels instead of the
  /// flattened single-channel sequence.
  bool reshape_for_discriminator = true;
  double leaky_slope = 0.2;

  double effective_sigma() const { return scale_output ? sigma : 1.0; }
  /// Table width divided by width_divisor, at least 1.
  int64_t width(int64_t table_width) const;
  /// Generator input length for `target_codes` outputs (two stride-2 layers).
  static int64_t input_length(int64_t target_codes) { return 4 * target_codes; }

  void validate() const;
};

/// sigma * tanh(x), clamped to the open interval (-sigma, sigma) in the
/// tensor's own precision.
torch::Tensor scaled_tanh(const torch::Tensor& x, double sigma);

/// 1-D convolution whose zero padding makes the output length
/// floor(L / stride) for any input length L. Even kernels pad one more on
/// the left than on the right.
class SameConv1dImpl : public torch::nn::Cloneable<SameConv1dImpl> {
 public:
  SameConv1dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1,
                 int64_t dilation = 1, int64_t groups = 1);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  int64_t left_padding() const { return left_; }
  int64_t right_padding() const { return right_; }

  torch::nn::Conv1d conv{nullptr};

 private:
  int64_t in_, out_, kernel_, stride_, dilation_, groups_;
  int64_t left_ = 0, right_ = 0;
};
TORCH_MODULE(SameConv1d);

/// Three dilated residual units (dilations 1, 3, 9), each
/// LeakyReLU -> dilated conv3 -> LeakyReLU -> conv1, plus a 1x1 shortcut.
class ResidualStackImpl : public torch::nn::Cloneable<ResidualStackImpl> {
 public:
  ResidualStackImpl(int64_t channels, double slope);
  void reset() override;
  torch::Tensor forward(torch::Tensor x);

 private:
  int64_t channels_;
  double slope_;
  std::vector<torch::nn::Sequential> blocks_;
  std::vector<torch::nn::Conv1d> shortcuts_;
};
TORCH_MODULE(ResidualStack);

class MotionEncoderImpl : public torch::nn::Cloneable<MotionEncoderImpl> {
 public:
  explicit MotionEncoderImpl(const ModelConfig& cfg);
  void reset() override;
  /// [B, C_m, T_m] -> [B, width(1024), T_m].
  torch::Tensor forward(const torch::Tensor& motion);
  /// The single-channel output layer of the table; not used for fusion.
  torch::Tensor auxiliary_head(const torch::Tensor& features);

  int64_t output_channels() const;
  static constexpr int64_t kMinFrames = 6;

 private:
  ModelConfig cfg_;
  torch::nn::Sequential body_{nullptr};
  SameConv1d head_{nullptr};
};
TORCH_MODULE(MotionEncoder);

/// Two stride-1 conv layers, 1024 -> 512 -> 256 (before width division).
class VisualEncoderImpl : public torch::nn::Cloneable<VisualEncoderImpl> {
 public:
  explicit VisualEncoderImpl(const ModelConfig& cfg);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& visual);
  int64_t output_channels() const;

 private:
  ModelConfig cfg_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(VisualEncoder);

/// Nearest-neighbour temporal resampling: output frame i reads source frame
/// floor(i * T / length).
torch::Tensor nearest_resample(const torch::Tensor& x, int64_t length);

/// Resamples both streams to `length` and concatenates them along channels.
/// Throws DataError for an empty stream or zero length.
torch::Tensor fuse(const torch::Tensor& motion_features, const torch::Tensor& visual_features,
                   int64_t length);

class VQGeneratorImpl : public torch::nn::Cloneable<VQGeneratorImpl> {
 public:
  VQGeneratorImpl(const ModelConfig& cfg, int64_t in_channels);
  void reset() override;
  /// [B, C, 4T] -> [B, 64, T] strictly inside (-sigma, sigma).
  torch::Tensor forward(const torch::Tensor& fused);
  /// The activations fed to the final tanh.
  torch::Tensor pre_activation(const torch::Tensor& fused);

 private:
  ModelConfig cfg_;
  int64_t in_channels_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(VQGenerator);

class GeneratorImpl : public torch::nn::Cloneable<GeneratorImpl> {
 public:
  explicit GeneratorImpl(const ModelConfig& cfg);
  void reset() override;

  /// motion [B, C_m, T_m], visual [B, 1024, T_v] -> [B, 64, target_codes].
  torch::Tensor forward(const torch::Tensor& motion, const torch::Tensor& visual,
                        int64_t target_codes);
  /// The fused [B, C_fuse, 4 * target_codes] generator input. A disabled
  /// stream contributes zeros and its encoder is not evaluated.
  torch::Tensor fused_input(const torch::Tensor& motion, const torch::Tensor& visual,
                            int64_t target_codes);

  const ModelConfig& config() const { return cfg_; }

  MotionEncoder motion_encoder{nullptr};
  VisualEncoder visual_encoder{nullptr};
  VQGenerator vq_generator{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(Generator);

/// [B, D, T] -> [B, 1, D * T]; position D * t + d holds f[d, t].
torch::Tensor reshape_for_discriminator(const torch::Tensor& features);
/// Inverse of reshape_for_discriminator.
torch::Tensor unreshape_from_discriminator(const torch::Tensor& sequence, int64_t dim);

struct DiscriminatorOutput {
  /// [B, 1, windows]
  torch::Tensor scores;
  /// Activations of the six layers before the score layer.
  std::vector<torch::Tensor> features;
};

class DiscriminatorBlockImpl : public torch::nn::Cloneable<DiscriminatorBlockImpl> {
 public:
  DiscriminatorBlockImpl(int64_t in_channels, int64_t width_divisor, double slope);
  void reset() override;
  DiscriminatorOutput forward(const torch::Tensor& x);

  static constexpr int64_t kFeatureLayers = 6;
  /// Input length below which the reflect-padded first layer is undefined.
  static constexpr int64_t kMinLength = 8;

 private:
  int64_t in_channels_, divisor_;
  double slope_;
  std::vector<torch::nn::Conv1d> layers_;
};
TORCH_MODULE(DiscriminatorBlock);

/// `count` blocks; block k sees the input average-pooled k times
/// (kernel 4, stride 2), i.e. downsampled by 1, 2, 4.
class DiscriminatorSetImpl : public torch::nn::Cloneable<DiscriminatorSetImpl> {
 public:
  DiscriminatorSetImpl(int64_t count, int64_t in_channels, int64_t width_divisor,
                       double slope = 0.2);
  void reset() override;
  /// Throws DataError when the coarsest scale is shorter than kMinLength.
  std::vector<DiscriminatorOutput> forward(const torch::Tensor& x);

  int64_t count() const { return count_; }
  int64_t in_channels() const { return in_channels_; }

 private:
  int64_t count_, in_channels_, divisor_;
  double slope_;
  std::vector<DiscriminatorBlock> blocks_;
};
TORCH_MODULE(DiscriminatorSet);

/// Prepares generator output for the discriminator set according to
/// cfg.reshape_for_discriminator.
torch::Tensor discriminator_input(const torch::Tensor& features, const ModelConfig& cfg);

/// Discriminator set matching a generator config (input width depends on the
/// reshape setting).
DiscriminatorSet make_discriminators(const ModelConfig& cfg);

/// Number of scalar parameters in a module.
int64_t parameter_count(const torch::nn::Module& module);

}  // namespace m2m

#endif  // M2M_MODEL_HPP_
