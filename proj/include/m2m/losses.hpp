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

// Training objectives. Every L1 term is mean-normalized (divided by its
// element count) and every window score is averaged over window positions
// and batch before summing over discriminator scales.

#ifndef M2M_LOSSES_HPP_
#define M2M_LOSSES_HPP_

#include <torch/torch.h>

#include <string>
#include <vector>

#include "m2m/audio.hpp"
#include "m2m/model.hpp"

namespace m2m {

struct LossWeights {
  double feature_matching = 3.0;
  double commitment = 15.0;
  double waveform = 40.0;
  double mel = 15.0;

  /// Throws ConfigError for a negative or non-finite weight.
  void validate() const;
};

/// Per-term switches for the loss ablations. A disabled term is neither
/// computed nor added to the total.
struct LossToggles {
  bool adversarial = true;
  bool feature_matching = true;
  bool commitment = true;
  bool waveform = true;
  bool mel = true;
};

/// Scalar loss tensors; an undefined tensor marks a disabled term.
struct LossTerms {
  torch::Tensor adversarial;
  torch::Tensor feature_matching;
  torch::Tensor commitment;
  torch::Tensor waveform;
  torch::Tensor mel;
};

/// Term values as doubles. Disabled terms read 0 and are flagged off.
struct LossReport {
  double adversarial = 0.0;
  double feature_matching = 0.0;
  double commitment = 0.0;
  double waveform = 0.0;
  double mel = 0.0;
  double total = 0.0;
  LossToggles enabled;
};

/// adversarial + sum of weighted enabled terms, evaluated in double.
double weighted_total(const LossReport& report, const LossWeights& weights);

struct GeneratorLoss {
  torch::Tensor total;
  LossReport report;
};

/// Weighted sum of the defined terms. Throws NumericError naming the first
/// non-finite term.
GeneratorLoss total_g_loss(const LossTerms& terms, const LossWeights& weights);

/// sum_k mean(relu(1 - real_k)) + mean(relu(1 + fake_k)).
torch::Tensor hinge_d_loss(const std::vector<torch::Tensor>& real_scores,
                           const std::vector<torch::Tensor>& fake_scores);
/// sum_k mean(-fake_k).
torch::Tensor hinge_g_loss(const std::vector<torch::Tensor>& fake_scores);

/// sum over scales and layers of mean |real - fake|. `real` is used as given;
/// detach it when the discriminator should not receive gradients.
torch::Tensor feature_matching_loss(const std::vector<std::vector<torch::Tensor>>& real_features,
                                    const std::vector<std::vector<torch::Tensor>>& fake_features);

/// mean |gt_quantized - generated|.
torch::Tensor commitment_loss(const torch::Tensor& generated, const torch::Tensor& gt_quantized);

/// mean |reference - decoded| over the last dimension. The reference is
/// cropped to the decoded length; a shorter reference is a DataError.
torch::Tensor waveform_loss(const torch::Tensor& reference, const torch::Tensor& decoded);

/// mean |mel(reference) - mel(decoded)| with the same cropping rule.
torch::Tensor mel_loss(const torch::Tensor& reference, const torch::Tensor& decoded,
                       const MelTransform& mel);

/// Score and feature views of discriminator outputs, one entry per scale.
std::vector<torch::Tensor> scores_of(const std::vector<DiscriminatorOutput>& outputs);
std::vector<std::vector<torch::Tensor>> features_of(const std::vector<DiscriminatorOutput>& outputs);

}  // namespace m2m

#endif  // M2M_LOSSES_HPP_
