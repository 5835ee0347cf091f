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


// Shared helpers for the test binaries: scratch directories, signal builders
// and straightforward reference implementations used as oracles.

#ifndef M2M_TESTS_SUPPORT_HPP_
#define M2M_TESTS_SUPPORT_HPP_

#include <torch/torch.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "m2m/audio.hpp"

namespace m2m::testing {

inline constexpr double kTestPi = 3.14159265358979323846;

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("m2m_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Waveform sine(double hz, double seconds, double amplitude = 0.5, int rate = 22050) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<size_t>(std::llround(seconds * rate));
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * kTestPi * hz * i / rate));
  }
  return w;
}

/// Decaying 2 kHz bursts starting at each click time.
inline Waveform click_track(const std::vector<double>& times, double seconds, int rate = 22050) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.assign(static_cast<size_t>(std::llround(seconds * rate)), 0.0f);
  const auto burst = static_cast<size_t>(0.03 * rate);
  for (double t : times) {
    const auto start = static_cast<size_t>(std::llround(t * rate));
    for (size_t i = 0; i < burst && start + i < w.samples.size(); ++i) {
      const double env = std::exp(-static_cast<double>(i) / (0.005 * rate));
      w.samples[start + i] += static_cast<float>(0.8 * env * std::sin(2.0 * kTestPi * 2000.0 * i / rate));
    }
  }
  return w;
}

inline std::vector<double> to_vector(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous().flatten();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

inline double relative_error(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(want), std::abs(got), 1e-12});
}

/// Slaney mel scale written from its definition: 3 mels per 200 Hz up to
/// 1 kHz (15 mels), then 27 mels per factor 6.4 in frequency.
inline double oracle_hz_to_mel(double hz) {
  if (hz < 1000.0) return 3.0 * hz / 200.0;
  return 15.0 + 27.0 * std::log(hz / 1000.0) / std::log(6.4);
}

inline double oracle_mel_to_hz(double mel) {
  if (mel < 15.0) return 200.0 * mel / 3.0;
  return 1000.0 * std::pow(6.4, (mel - 15.0) / 27.0);
}

/// Area-normalised triangular filters on the rfft bin grid, [n_mels][bins].
inline std::vector<std::vector<double>> oracle_filterbank(int rate, int n_fft, int n_mels) {
  const int bins = n_fft / 2 + 1;
  const double top = oracle_hz_to_mel(rate / 2.0);
  std::vector<double> hz(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) hz[i] = oracle_mel_to_hz(top * i / (n_mels + 1));
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / n_fft;
      double w = 0.0;
      if (f > hz[m] && f <= hz[m + 1]) w = (f - hz[m]) / (hz[m + 1] - hz[m]);
      else if (f > hz[m + 1] && f < hz[m + 2]) w = (hz[m + 2] - f) / (hz[m + 2] - hz[m + 1]);
      fb[m][k] = w * 2.0 / (hz[m + 2] - hz[m]);
    }
  }
  return fb;
}

/// log(1 + mel(|DFT|)) with a centred, reflect-padded periodic Hann window,
/// evaluated by direct summation. Returns [n_mels][frames].
inline std::vector<std::vector<double>> oracle_log_mel(const std::vector<double>& x, int rate,
                                                       int n_fft, int hop, int n_mels) {
  const auto n = static_cast<int64_t>(x.size());
  const int half = n_fft / 2;
  auto sample = [&](int64_t i) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return x[static_cast<size_t>(i)];
  };
  const auto fb = oracle_filterbank(rate, n_fft, n_mels);
  const int bins = n_fft / 2 + 1;
  const int64_t frames = 1 + n / hop;
  std::vector<std::vector<double>> out(n_mels, std::vector<double>(frames, 0.0));
  std::vector<double> frame(n_fft), mag(bins), cos_table(n_fft), sin_table(n_fft);
  for (int j = 0; j < n_fft; ++j) {
    cos_table[j] = std::cos(2.0 * kTestPi * j / n_fft);
    sin_table[j] = std::sin(2.0 * kTestPi * j / n_fft);
  }
  for (int64_t t = 0; t < frames; ++t) {
    for (int j = 0; j < n_fft; ++j) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * kTestPi * j / n_fft);
      frame[j] = w * sample(t * hop - half + j);
    }
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int j = 0; j < n_fft; ++j) {
        const size_t phase = static_cast<size_t>(k) * j % n_fft;
        re += frame[j] * cos_table[phase];
        im -= frame[j] * sin_table[phase];
      }
      mag[k] = std::hypot(re, im);
    }
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) acc += fb[m][k] * mag[k];
      out[m][t] = std::log1p(acc);
    }
  }
  return out;
}

/// Hinge discriminator loss: sum over scales of mean(max(0, 1 - real)) +
/// mean(max(0, 1 + fake)).
inline double oracle_hinge_d(const std::vector<torch::Tensor>& real,
                             const std::vector<torch::Tensor>& fake) {
  double total = 0.0;
  for (size_t k = 0; k < real.size(); ++k) {
    const auto r = to_vector(real[k]);
    const auto f = to_vector(fake[k]);
    double sr = 0.0, sf = 0.0;
    for (double v : r) sr += std::max(0.0, 1.0 - v);
    for (double v : f) sf += std::max(0.0, 1.0 + v);
    total += sr / r.size() + sf / f.size();
  }
  return total;
}

inline double oracle_hinge_g(const std::vector<torch::Tensor>& fake) {
  double total = 0.0;
  for (const auto& f : fake) {
    const auto v = to_vector(f);
    double s = 0.0;
    for (double x : v) s += x;
    total -= s / v.size();
  }
  return total;
}

inline double oracle_mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / a.size();
}

inline double oracle_feature_matching(const std::vector<std::vector<torch::Tensor>>& real,
                                      const std::vector<std::vector<torch::Tensor>>& fake) {
  double total = 0.0;
  for (size_t k = 0; k < real.size(); ++k) {
    for (size_t i = 0; i < real[k].size(); ++i) {
      total += oracle_mean_abs_diff(to_vector(real[k][i]), to_vector(fake[k][i]));
    }
  }
  return total;
}

/// Mean |reference - decoded| over [B, N] rows, reference cropped to N.
inline double oracle_waveform(const torch::Tensor& reference, const torch::Tensor& decoded) {
  const auto ref = reference.to(torch::kFloat64).contiguous();
  const auto dec = decoded.to(torch::kFloat64).contiguous();
  const int64_t rows = dec.size(0), n = dec.size(1), stride = ref.size(1);
  const double* r = ref.data_ptr<double>();
  const double* d = dec.data_ptr<double>();
  double s = 0.0;
  for (int64_t b = 0; b < rows; ++b) {
    for (int64_t i = 0; i < n; ++i) s += std::abs(r[b * stride + i] - d[b * n + i]);
  }
  return s / static_cast<double>(rows * n);
}

/// Mean absolute difference of the direct-DFT log-mel matrices of two 1-D signals.
inline double oracle_mel_loss(const torch::Tensor& reference, const torch::Tensor& decoded,
                              const MelParams& p) {
  const auto mr = oracle_log_mel(to_vector(reference), p.sample_rate, p.n_fft, p.hop, p.n_mels);
  const auto md = oracle_log_mel(to_vector(decoded), p.sample_rate, p.n_fft, p.hop, p.n_mels);
  double s = 0.0;
  size_t count = 0;
  for (size_t m = 0; m < mr.size(); ++m) {
    for (size_t t = 0; t < mr[m].size(); ++t, ++count) s += std::abs(mr[m][t] - md[m][t]);
  }
  return s / count;
}

}  // namespace m2m::testing

#endif  // M2M_TESTS_SUPPORT_HPP_
