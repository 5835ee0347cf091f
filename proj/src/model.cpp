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

#include "m2m/model.hpp"

#include <cmath>
#include <numeric>

namespace m2m {
namespace F = torch::nn::functional;
namespace {

torch::nn::LeakyReLU leaky(double slope) {
  return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(slope));
}

struct GeneratorRow {
  int64_t width;
  int64_t kernel;
  int64_t stride;
  bool residual;
};

// Hidden rows of the VQ generator tables; the 64-wide output row follows.
const std::vector<GeneratorRow>& generator_rows(Level level) {
  static const std::vector<GeneratorRow> kHigh = {
      {32, 6, 2, true},    {64, 41, 2, true},  {128, 41, 1, true},
      {256, 41, 1, true},  {512, 41, 1, true}};
  static const std::vector<GeneratorRow> kLow = {
      {32, 6, 2, true},     {64, 4, 1, true},     {128, 40, 2, true},
      {256, 40, 1, true},   {512, 40, 1, true},   {1024, 40, 1, true},
      {1024, 40, 1, false}};
  return level == Level::kHigh ? kHigh : kLow;
}

}  // namespace

int64_t motion_channels(MotionRepresentation rep) {
  return rep == MotionRepresentation::kKeypoints2d ? 34 : 75;
}

std::string_view to_string(MotionRepresentation rep) {
  return rep == MotionRepresentation::kKeypoints2d ? "keypoints2d" : "smpl";
}

MotionRepresentation parse_motion_representation(std::string_view text) {
  if (text == "keypoints2d") return MotionRepresentation::kKeypoints2d;
  if (text == "smpl") return MotionRepresentation::kSmpl;
  throw DataError("unknown motion representation '" + std::string(text) + "'");
}

int64_t ModelConfig::width(int64_t table_width) const {
  return std::max<int64_t>(1, table_width / width_divisor);
}

void ModelConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (width_divisor < 1) throw ConfigError("width_divisor must be >= 1");
  if (motion_channels < 1 || visual_channels < 1) throw ConfigError("input channels must be >= 1");
  if (discriminator_count < 1 || discriminator_count > 3) {
    throw ConfigError("discriminator count must be 1, 2 or 3");
  }
  if (!use_motion && !use_visual) {
    throw ConfigError("at least one of the motion and visual streams must be enabled");
  }
}

torch::Tensor scaled_tanh(const torch::Tensor& x, double sigma) {
  double bound;
  if (x.scalar_type() == torch::kFloat64) {
    bound = std::nextafter(sigma, 0.0);
  } else {
    bound = static_cast<double>(std::nextafter(static_cast<float>(sigma), 0.0f));
  }
  return torch::clamp(sigma * torch::tanh(x), -bound, bound);
}

// --- SameConv1d --------------------------------------------------------------

SameConv1dImpl::SameConv1dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride,
                               int64_t dilation, int64_t groups)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), dilation_(dilation), groups_(groups) {
  reset();
}

void SameConv1dImpl::reset() {
  const int64_t total = std::max<int64_t>(0, dilation_ * (kernel_ - 1) + 1 - stride_);
  left_ = (total + 1) / 2;
  right_ = total / 2;
  conv = register_module("conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(in_, out_, kernel_)
                                                       .stride(stride_)
                                                       .dilation(dilation_)
                                                       .groups(groups_)));
}

torch::Tensor SameConv1dImpl::forward(const torch::Tensor& x) {
  if (left_ == 0 && right_ == 0) return conv->forward(x);
  return conv->forward(F::pad(x, F::PadFuncOptions({left_, right_})));
}

// --- ResidualStack -----------------------------------------------------------

ResidualStackImpl::ResidualStackImpl(int64_t channels, double slope)
    : channels_(channels), slope_(slope) {
  reset();
}

void ResidualStackImpl::reset() {
  blocks_.clear();
  shortcuts_.clear();
  const int64_t dilations[] = {1, 3, 9};
  for (int i = 0; i < 3; ++i) {
    blocks_.push_back(register_module(
        "block" + std::to_string(i),
        torch::nn::Sequential(leaky(slope_), SameConv1d(channels_, channels_, 3, 1, dilations[i]),
                              leaky(slope_), SameConv1d(channels_, channels_, 1))));
    shortcuts_.push_back(register_module(
        "shortcut" + std::to_string(i),
        torch::nn::Conv1d(torch::nn::Conv1dOptions(channels_, channels_, 1))));
  }
}

torch::Tensor ResidualStackImpl::forward(torch::Tensor x) {
  for (size_t i = 0; i < blocks_.size(); ++i) {
    x = shortcuts_[i]->forward(x) + blocks_[i]->forward(x);
  }
  return x;
}

// --- MotionEncoder -----------------------------------------------------------

MotionEncoderImpl::MotionEncoderImpl(const ModelConfig& cfg) : cfg_(cfg) { reset(); }

void MotionEncoderImpl::reset() {
  const double s = cfg_.leaky_slope;
  const int64_t w256 = cfg_.width(256), w512 = cfg_.width(512), w1024 = cfg_.width(1024);
  body_ = register_module(
      "body", torch::nn::Sequential(
                  SameConv1d(cfg_.motion_channels, w256, 6), leaky(s), ResidualStack(w256, s),
                  SameConv1d(w256, w512, 3), leaky(s), ResidualStack(w512, s),
                  SameConv1d(w512, w1024, 3), leaky(s), ResidualStack(w1024, s),
                  SameConv1d(w1024, w1024, 3), leaky(s)));
  head_ = register_module("head", SameConv1d(w1024, 1, 4));
}

torch::Tensor MotionEncoderImpl::forward(const torch::Tensor& motion) {
  if (motion.dim() != 3 || motion.size(1) != cfg_.motion_channels) {
    throw DataError("motion input must be [B, " + std::to_string(cfg_.motion_channels) + ", T]");
  }
  if (motion.size(2) < kMinFrames) {
    throw DataError("motion sequence has " + std::to_string(motion.size(2)) +
                    " frames; at least " + std::to_string(kMinFrames) + " are required");
  }
  return body_->forward(motion);
}

torch::Tensor MotionEncoderImpl::auxiliary_head(const torch::Tensor& features) {
  return head_->forward(features);
}

int64_t MotionEncoderImpl::output_channels() const { return cfg_.width(1024); }

// --- VisualEncoder -----------------------------------------------------------

VisualEncoderImpl::VisualEncoderImpl(const ModelConfig& cfg) : cfg_(cfg) { reset(); }

void VisualEncoderImpl::reset() {
  const double s = cfg_.leaky_slope;
  body_ = register_module(
      "body", torch::nn::Sequential(SameConv1d(cfg_.visual_channels, cfg_.width(512), 3), leaky(s),
                                    SameConv1d(cfg_.width(512), cfg_.width(256), 3), leaky(s)));
}

torch::Tensor VisualEncoderImpl::forward(const torch::Tensor& visual) {
  if (visual.dim() != 3 || visual.size(1) != cfg_.visual_channels) {
    throw DataError("visual input must be [B, " + std::to_string(cfg_.visual_channels) + ", T]");
  }
  if (visual.size(2) < 1) throw DataError("visual feature sequence is empty");
  return body_->forward(visual);
}

int64_t VisualEncoderImpl::output_channels() const { return cfg_.width(256); }

// --- Fusion ------------------------------------------------------------------

torch::Tensor nearest_resample(const torch::Tensor& x, int64_t length) {
  const int64_t source = x.size(-1);
  if (source < 1 || length < 1) throw DataError("nearest_resample: zero-length sequence");
  if (source == length) return x;
  std::vector<int64_t> index(static_cast<size_t>(length));
  for (int64_t i = 0; i < length; ++i) index[i] = (i * source) / length;
  auto idx = torch::tensor(index, torch::TensorOptions().dtype(torch::kInt64).device(x.device()));
  return x.index_select(x.dim() - 1, idx);
}

torch::Tensor fuse(const torch::Tensor& motion_features, const torch::Tensor& visual_features,
                   int64_t length) {
  if (length < 1) throw DataError("fuse: target length must be positive");
  if (!motion_features.defined() || !visual_features.defined() ||
      motion_features.size(-1) < 1 || visual_features.size(-1) < 1) {
    throw DataError("fuse: empty input stream");
  }
  return torch::cat({nearest_resample(motion_features, length),
                     nearest_resample(visual_features, length)},
                    1);
}

// --- VQGenerator -------------------------------------------------------------

VQGeneratorImpl::VQGeneratorImpl(const ModelConfig& cfg, int64_t in_channels)
    : cfg_(cfg), in_channels_(in_channels) {
  reset();
}

void VQGeneratorImpl::reset() {
  const double s = cfg_.leaky_slope;
  torch::nn::Sequential seq;
  int64_t channels = in_channels_;
  for (const auto& row : generator_rows(cfg_.level)) {
    const int64_t width = cfg_.width(row.width);
    seq->push_back(SameConv1d(channels, width, row.kernel, row.stride));
    seq->push_back(torch::nn::BatchNorm1d(width));
    seq->push_back(leaky(s));
    if (row.residual) seq->push_back(ResidualStack(width, s));
    channels = width;
  }
  seq->push_back(SameConv1d(channels, kCodeDim, 40));
  if (cfg_.level == Level::kLow) seq->push_back(leaky(s));
  body_ = register_module("body", seq);
}

torch::Tensor VQGeneratorImpl::pre_activation(const torch::Tensor& fused) {
  if (fused.dim() != 3 || fused.size(1) != in_channels_) {
    throw DataError("generator input must be [B, " + std::to_string(in_channels_) + ", 4T]");
  }
  if (fused.size(2) < 4 || fused.size(2) % 4 != 0) {
    throw DataError("generator input length " + std::to_string(fused.size(2)) +
                    " is not a positive multiple of 4");
  }
  return body_->forward(fused);
}

torch::Tensor VQGeneratorImpl::forward(const torch::Tensor& fused) {
  return scaled_tanh(pre_activation(fused), cfg_.effective_sigma());
}

// --- Generator ---------------------------------------------------------------

GeneratorImpl::GeneratorImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  reset();
}

void GeneratorImpl::reset() {
  motion_encoder = register_module("motion", MotionEncoder(cfg_));
  visual_encoder = register_module("visual", VisualEncoder(cfg_));
  vq_generator = register_module(
      "vq", VQGenerator(cfg_, motion_encoder->output_channels() + visual_encoder->output_channels()));
}

torch::Tensor GeneratorImpl::fused_input(const torch::Tensor& motion, const torch::Tensor& visual,
                                         int64_t target_codes) {
  if (target_codes < 1) throw DataError("target code count must be positive");
  const int64_t length = ModelConfig::input_length(target_codes);
  const torch::Tensor& any = cfg_.use_motion ? motion : visual;
  const auto opts = any.options();
  const int64_t batch = any.size(0);
  auto m = cfg_.use_motion
               ? motion_encoder->forward(motion)
               : torch::zeros({batch, motion_encoder->output_channels(), length}, opts);
  auto v = cfg_.use_visual
               ? visual_encoder->forward(visual)
               : torch::zeros({batch, visual_encoder->output_channels(), length}, opts);
  return fuse(m, v, length);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& motion, const torch::Tensor& visual,
                                     int64_t target_codes) {
  return vq_generator->forward(fused_input(motion, visual, target_codes));
}

// --- Discriminator -----------------------------------------------------------

torch::Tensor reshape_for_discriminator(const torch::Tensor& features) {
  TORCH_CHECK(features.dim() == 3, "expected [B, D, T] features");
  const int64_t b = features.size(0), d = features.size(1), t = features.size(2);
  return features.transpose(1, 2).reshape({b, 1, d * t});
}

torch::Tensor unreshape_from_discriminator(const torch::Tensor& sequence, int64_t dim) {
  TORCH_CHECK(sequence.dim() == 3 && sequence.size(1) == 1, "expected [B, 1, D*T] sequence");
  TORCH_CHECK(sequence.size(2) % dim == 0, "sequence length is not a multiple of D");
  const int64_t b = sequence.size(0), t = sequence.size(2) / dim;
  return sequence.reshape({b, t, dim}).transpose(1, 2).contiguous();
}

DiscriminatorBlockImpl::DiscriminatorBlockImpl(int64_t in_channels, int64_t width_divisor,
                                               double slope)
    : in_channels_(in_channels), divisor_(width_divisor), slope_(slope) {
  reset();
}

void DiscriminatorBlockImpl::reset() {
  layers_.clear();
  auto w = [&](int64_t table) { return std::max<int64_t>(1, table / divisor_); };
  auto add = [&](torch::nn::Conv1dOptions opts) {
    layers_.push_back(
        register_module("layer" + std::to_string(layers_.size()), torch::nn::Conv1d(opts)));
  };
  add(torch::nn::Conv1dOptions(in_channels_, w(16), 15));
  int64_t channels = w(16);
  const int64_t widths[] = {64, 256, 1024, 1024};
  const int64_t groups[] = {4, 16, 64, 256};
  for (int i = 0; i < 4; ++i) {
    const int64_t out = w(widths[i]);
    const int64_t g = std::gcd(std::max<int64_t>(1, groups[i] / divisor_), std::gcd(channels, out));
    add(torch::nn::Conv1dOptions(channels, out, 41).stride(4).padding(20).groups(g));
    channels = out;
  }
  add(torch::nn::Conv1dOptions(channels, w(1024), 5).padding(2));
  add(torch::nn::Conv1dOptions(w(1024), 1, 3).padding(1));
}

DiscriminatorOutput DiscriminatorBlockImpl::forward(const torch::Tensor& x) {
  if (x.size(-1) < kMinLength) {
    throw DataError("discriminator input of length " + std::to_string(x.size(-1)) +
                    " is shorter than " + std::to_string(kMinLength));
  }
  DiscriminatorOutput out;
  auto h = F::pad(x, F::PadFuncOptions({7, 7}).mode(torch::kReflect));
  for (size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = F::leaky_relu(layers_[i]->forward(h), F::LeakyReLUFuncOptions().negative_slope(slope_));
    out.features.push_back(h);
  }
  out.scores = layers_.back()->forward(h);
  return out;
}

DiscriminatorSetImpl::DiscriminatorSetImpl(int64_t count, int64_t in_channels,
                                           int64_t width_divisor, double slope)
    : count_(count), in_channels_(in_channels), divisor_(width_divisor), slope_(slope) {
  if (count < 1) throw ConfigError("discriminator set needs at least one block");
  reset();
}

void DiscriminatorSetImpl::reset() {
  blocks_.clear();
  for (int64_t k = 0; k < count_; ++k) {
    blocks_.push_back(register_module("block" + std::to_string(k),
                                      DiscriminatorBlock(in_channels_, divisor_, slope_)));
  }
}

std::vector<DiscriminatorOutput> DiscriminatorSetImpl::forward(const torch::Tensor& x) {
  int64_t coarsest = x.size(-1);
  for (int64_t k = 1; k < count_; ++k) coarsest /= 2;
  if (coarsest < DiscriminatorBlockImpl::kMinLength) {
    throw DataError("sequence of length " + std::to_string(x.size(-1)) +
                    " is too short for the coarsest discriminator scale");
  }
  std::vector<DiscriminatorOutput> outputs;
  torch::Tensor h = x;
  for (int64_t k = 0; k < count_; ++k) {
    if (k > 0) {
      h = F::avg_pool1d(h, F::AvgPool1dFuncOptions(4).stride(2).padding(1).count_include_pad(false));
    }
    outputs.push_back(blocks_[k]->forward(h));
  }
  return outputs;
}

torch::Tensor discriminator_input(const torch::Tensor& features, const ModelConfig& cfg) {
  return cfg.reshape_for_discriminator ? reshape_for_discriminator(features) : features;
}

DiscriminatorSet make_discriminators(const ModelConfig& cfg) {
  return DiscriminatorSet(cfg.discriminator_count, cfg.reshape_for_discriminator ? 1 : kCodeDim,
                          cfg.width_divisor, cfg.leaky_slope);
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace m2m
