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


#include <gtest/gtest.h>

#include "m2m/losses.hpp"
#include "support.hpp"

namespace m2m {
namespace {

using testing::relative_error;
using testing::to_vector;
using testing::oracle_mean_abs_diff;

std::vector<torch::Tensor> random_scores(std::mt19937& rng, int scales) {
  std::vector<torch::Tensor> out;
  for (int k = 0; k < scales; ++k) {
    out.push_back(2.0 * torch::randn({1 + static_cast<int64_t>(rng() % 3), 1,
                                      1 + static_cast<int64_t>(rng() % 20)},
                                     torch::kFloat64));
  }
  return out;
}

TEST(LossOracle, HingeDiscriminator) {
  std::mt19937 rng(1);
  torch::manual_seed(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int scales = 1 + trial % 3;
    const auto real = random_scores(rng, scales);
    std::vector<torch::Tensor> fake;
    for (const auto& r : real) fake.push_back(2.0 * torch::randn(r.sizes(), torch::kFloat64));
    EXPECT_LT(relative_error(hinge_d_loss(real, fake).item<double>(), testing::oracle_hinge_d(real, fake)), 1e-6);
  }
}

TEST(LossOracle, HingeGenerator) {
  std::mt19937 rng(2);
  torch::manual_seed(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto fake = random_scores(rng, 1 + trial % 3);
    const double want = testing::oracle_hinge_g(fake);
    EXPECT_LT(relative_error(hinge_g_loss(fake).item<double>(), want), 1e-6);
  }
}

TEST(LossOracle, FeatureMatching) {
  torch::manual_seed(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<torch::Tensor>> real(1 + trial % 3), fake(real.size());
    for (size_t k = 0; k < real.size(); ++k) {
      for (int i = 0; i < 6; ++i) {
        real[k].push_back(torch::randn({2, 3 + i, 5 + trial % 7}, torch::kFloat64));
        fake[k].push_back(torch::randn({2, 3 + i, 5 + trial % 7}, torch::kFloat64));
      }
    }
    EXPECT_LT(relative_error(feature_matching_loss(real, fake).item<double>(),
                             testing::oracle_feature_matching(real, fake)),
              1e-6);
  }
}

TEST(LossOracle, CommitmentAndWaveform) {
  torch::manual_seed(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = 100.0 * torch::randn({2, 64, 8 + trial}, torch::kFloat64);
    const auto q = 100.0 * torch::randn({2, 64, 8 + trial}, torch::kFloat64);
    EXPECT_LT(relative_error(commitment_loss(g, q).item<double>(),
                             oracle_mean_abs_diff(to_vector(q), to_vector(g))),
              1e-6);

    const int64_t n = 100 + 10 * trial;
    const auto ref = torch::rand({2, n + trial}, torch::kFloat64) * 2 - 1;
    const auto dec = torch::rand({2, n}, torch::kFloat64) * 2 - 1;
    EXPECT_LT(relative_error(waveform_loss(ref, dec).item<double>(), testing::oracle_waveform(ref, dec)),
              1e-6);
  }
}

TEST(LossOracle, MelAgainstDirectDft) {
  torch::manual_seed(5);
  const MelParams params;
  const MelTransform mel(params);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = 600 + 37 * trial;
    const auto ref = 0.5 * torch::randn({n}, torch::kFloat64);
    const auto dec = 0.5 * torch::randn({n}, torch::kFloat64);
    EXPECT_LT(relative_error(mel_loss(ref, dec, mel).item<double>(),
                             testing::oracle_mel_loss(ref, dec, params)),
              1e-6);
  }
}

TEST(LossProperties, HingeIsZeroOnlyBeyondMargins) {
  const std::vector<torch::Tensor> real = {torch::full({1, 1, 4}, 1.5)};
  const std::vector<torch::Tensor> fake = {torch::full({1, 1, 4}, -1.5)};
  EXPECT_EQ(hinge_d_loss(real, fake).item<float>(), 0.0f);
  const std::vector<torch::Tensor> inside = {torch::full({1, 1, 4}, 0.5)};
  EXPECT_GT(hinge_d_loss(inside, fake).item<float>(), 0.0f);
  EXPECT_THROW(hinge_d_loss(real, {}), DataError);
  EXPECT_THROW(hinge_g_loss({}), DataError);
}

TEST(LossProperties, ShapeMismatchAndShortClipsRejected) {
  EXPECT_THROW(commitment_loss(torch::zeros({1, 64, 4}), torch::zeros({1, 64, 5})), DataError);
  EXPECT_THROW(waveform_loss(torch::zeros({10}), torch::zeros({20})), DataError);
  EXPECT_THROW(mel_loss(torch::zeros({400}), torch::zeros({400}), MelTransform()), DataError);
}

LossTerms unit_terms() {
  LossTerms t;
  t.adversarial = torch::tensor(1.0, torch::kFloat64);
  t.feature_matching = torch::tensor(1.0, torch::kFloat64);
  t.commitment = torch::tensor(1.0, torch::kFloat64);
  t.waveform = torch::tensor(1.0, torch::kFloat64);
  t.mel = torch::tensor(1.0, torch::kFloat64);
  return t;
}

TEST(TotalLoss, DefaultWeightsSumTo74OnUnitTerms) {
  const auto out = total_g_loss(unit_terms(), LossWeights{});
  EXPECT_EQ(out.total.item<double>(), 74.0);
  EXPECT_EQ(out.report.total, 74.0);
}

TEST(TotalLoss, PerturbationRecoversEachWeight) {
  const LossWeights w;
  const double base = total_g_loss(unit_terms(), w).total.item<double>();
  const double delta = 0.5;
  auto bumped = [&](torch::Tensor LossTerms::*member) {
    LossTerms t = unit_terms();
    t.*member = torch::tensor(1.0 + delta, torch::kFloat64);
    return (total_g_loss(t, w).total.item<double>() - base) / delta;
  };
  EXPECT_EQ(bumped(&LossTerms::adversarial), 1.0);
  EXPECT_EQ(bumped(&LossTerms::feature_matching), 3.0);
  EXPECT_EQ(bumped(&LossTerms::commitment), 15.0);
  EXPECT_EQ(bumped(&LossTerms::waveform), 40.0);
  EXPECT_EQ(bumped(&LossTerms::mel), 15.0);
}

TEST(TotalLoss, DisabledTermsDropOutAndAllDisabledIsAnError) {
  LossTerms t = unit_terms();
  t.commitment = torch::Tensor();
  const auto out = total_g_loss(t, LossWeights{});
  EXPECT_EQ(out.total.item<double>(), 59.0);
  EXPECT_FALSE(out.report.enabled.commitment);
  EXPECT_THROW(total_g_loss(LossTerms{}, LossWeights{}), ConfigError);
}

TEST(TotalLoss, NonFiniteTermNamed) {
  LossTerms t = unit_terms();
  t.mel = torch::tensor(std::nan(""), torch::kFloat64);
  try {
    total_g_loss(t, LossWeights{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("mel"), std::string::npos);
  }
}

TEST(TotalLoss, GradientFlowsOnlyThroughEnabledTerms) {
  auto a = torch::tensor(2.0, torch::requires_grad());
  auto b = torch::tensor(3.0, torch::requires_grad());
  LossTerms t;
  t.waveform = a * 1.0;
  t.mel = b * 1.0;
  total_g_loss(t, LossWeights{}).total.backward();
  EXPECT_FLOAT_EQ(a.grad().item<float>(), 40.0f);
  EXPECT_FLOAT_EQ(b.grad().item<float>(), 15.0f);
}

}  // namespace
}  // namespace m2m
