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

#include "m2m/losses.hpp"

#include <cmath>

namespace m2m {
namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw DataError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                    c10::str(b.sizes()));
  }
}

torch::Tensor crop_reference(const torch::Tensor& reference, const torch::Tensor& decoded,
                             const char* what) {
  const int64_t n = decoded.size(-1);
  if (reference.size(-1) < n) {
    throw DataError(std::string(what) + ": reference has " + std::to_string(reference.size(-1)) +
                    " samples, decoded has " + std::to_string(n));
  }
  auto cropped = reference.narrow(-1, 0, n);
  require_same_shape(cropped, decoded, what);
  return cropped;
}

double checked_value(const torch::Tensor& term, const char* name) {
  const double v = term.detach().to(torch::kFloat64).item<double>();
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + name + " loss");
  return v;
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {feature_matching, commitment, waveform, mel}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
}

double weighted_total(const LossReport& r, const LossWeights& w) {
  double total = 0.0;
  if (r.enabled.adversarial) total += r.adversarial;
  if (r.enabled.feature_matching) total += w.feature_matching * r.feature_matching;
  if (r.enabled.commitment) total += w.commitment * r.commitment;
  if (r.enabled.waveform) total += w.waveform * r.waveform;
  if (r.enabled.mel) total += w.mel * r.mel;
  return total;
}

GeneratorLoss total_g_loss(const LossTerms& terms, const LossWeights& weights) {
  GeneratorLoss out;
  LossReport& r = out.report;
  torch::Tensor total;
  auto add = [&](const torch::Tensor& term, double weight, const char* name, double& value,
                 bool& enabled) {
    enabled = term.defined();
    if (!enabled) return;
    value = checked_value(term, name);
    auto weighted = weight == 1.0 ? term : term * weight;
    total = total.defined() ? total + weighted : weighted;
  };
  add(terms.adversarial, 1.0, "adversarial", r.adversarial, r.enabled.adversarial);
  add(terms.feature_matching, weights.feature_matching, "feature matching", r.feature_matching,
      r.enabled.feature_matching);
  add(terms.commitment, weights.commitment, "commitment", r.commitment, r.enabled.commitment);
  add(terms.waveform, weights.waveform, "waveform", r.waveform, r.enabled.waveform);
  add(terms.mel, weights.mel, "mel", r.mel, r.enabled.mel);
  if (!total.defined()) throw ConfigError("every generator loss term is disabled");
  r.total = weighted_total(r, weights);
  out.total = total;
  return out;
}

torch::Tensor hinge_d_loss(const std::vector<torch::Tensor>& real_scores,
                           const std::vector<torch::Tensor>& fake_scores) {
  if (real_scores.empty() || real_scores.size() != fake_scores.size()) {
    throw DataError("hinge_d_loss: need matching, non-empty score collections");
  }
  torch::Tensor loss;
  for (size_t k = 0; k < real_scores.size(); ++k) {
    if (real_scores[k].numel() == 0 || fake_scores[k].numel() == 0) {
      throw DataError("hinge_d_loss: empty scores");
    }
    auto term = torch::relu(1.0 - real_scores[k]).mean() + torch::relu(1.0 + fake_scores[k]).mean();
    loss = loss.defined() ? loss + term : term;
  }
  return loss;
}

torch::Tensor hinge_g_loss(const std::vector<torch::Tensor>& fake_scores) {
  if (fake_scores.empty()) throw DataError("hinge_g_loss: no scores");
  torch::Tensor loss;
  for (const auto& s : fake_scores) {
    if (s.numel() == 0) throw DataError("hinge_g_loss: empty scores");
    auto term = -s.mean();
    loss = loss.defined() ? loss + term : term;
  }
  return loss;
}

torch::Tensor feature_matching_loss(const std::vector<std::vector<torch::Tensor>>& real_features,
                                    const std::vector<std::vector<torch::Tensor>>& fake_features) {
  if (real_features.empty() || real_features.size() != fake_features.size()) {
    throw DataError("feature_matching_loss: scale count mismatch");
  }
  torch::Tensor loss;
  for (size_t k = 0; k < real_features.size(); ++k) {
    if (real_features[k].size() != fake_features[k].size()) {
      throw DataError("feature_matching_loss: layer count mismatch");
    }
    for (size_t i = 0; i < real_features[k].size(); ++i) {
      require_same_shape(real_features[k][i], fake_features[k][i], "feature_matching_loss");
      auto term = (real_features[k][i] - fake_features[k][i]).abs().mean();
      loss = loss.defined() ? loss + term : term;
    }
  }
  if (!loss.defined()) throw DataError("feature_matching_loss: no feature maps");
  return loss;
}

torch::Tensor commitment_loss(const torch::Tensor& generated, const torch::Tensor& gt_quantized) {
  require_same_shape(generated, gt_quantized, "commitment_loss");
  return (gt_quantized - generated).abs().mean();
}

torch::Tensor waveform_loss(const torch::Tensor& reference, const torch::Tensor& decoded) {
  if (decoded.numel() == 0) throw DataError("waveform_loss: empty waveform");
  return (crop_reference(reference, decoded, "waveform_loss") - decoded).abs().mean();
}

torch::Tensor mel_loss(const torch::Tensor& reference, const torch::Tensor& decoded,
                       const MelTransform& mel) {
  if (decoded.size(-1) <= mel.params().n_fft / 2) {
    throw DataError("mel_loss: clip of " + std::to_string(decoded.size(-1)) +
                    " samples is too short for one mel frame");
  }
  auto ref = crop_reference(reference, decoded, "mel_loss");
  return (mel(ref) - mel(decoded)).abs().mean();
}

std::vector<torch::Tensor> scores_of(const std::vector<DiscriminatorOutput>& outputs) {
  std::vector<torch::Tensor> scores;
  for (const auto& o : outputs) scores.push_back(o.scores);
  return scores;
}

std::vector<std::vector<torch::Tensor>> features_of(
    const std::vector<DiscriminatorOutput>& outputs) {
  std::vector<std::vector<torch::Tensor>> features;
  for (const auto& o : outputs) features.push_back(o.features);
  return features;
}

}  // namespace m2m
