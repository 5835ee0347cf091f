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

// Audio substrate: WAV I/O, resampling, mel spectrograms, onset strength,
// peak-picked beats and spectral-gating denoise.
//
// Everything here is a pure function of its inputs. The mel transform is
// written against torch tensors so the same code path serves both analysis
// and the differentiable mel loss.

#ifndef M2M_AUDIO_HPP_
#define M2M_AUDIO_HPP_

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "m2m/common.hpp"

namespace m2m {

/// Mono audio. Samples are expected finite and within [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Reads a RIFF WAV file (16-bit PCM or 32-bit float, any channel count).
/// Channels are averaged to mono. Throws DataError on a missing file,
/// unsupported encoding or zero-length audio.
Waveform load_wav(const std::filesystem::path& path);

/// load_wav followed by resampling to kSampleRate and clamping to [-1, 1].
Waveform load_audio(const std::filesystem::path& path);

/// Writes 16-bit little-endian mono PCM. Samples are clamped to [-1, 1] and
/// quantized as round(x * 32768), saturating at 32767.
void save_wav(const Waveform& wave, const std::filesystem::path& path);

/// Kaiser-windowed sinc interpolation. Output length is
/// round(n * target_rate / sample_rate). Throws ConfigError for a
/// non-positive target.
Waveform resample(const Waveform& wave, int target_rate);

struct MelParams {
  int sample_rate = kSampleRate;
  int n_fft = 1024;
  int hop = 256;
  int n_mels = 80;
  double f_min = 0.0;
  /// Zero means Nyquist.
  double f_max = 0.0;

  double upper_frequency() const {
    return f_max > 0.0 ? f_max : sample_rate / 2.0;
  }
  /// Frames produced for `n_samples` under centered (reflect-padded) STFT.
  int64_t frame_count(int64_t n_samples) const { return 1 + n_samples / hop; }

  std::map<std::string, std::string> to_key_values() const;
  static MelParams from_key_values(const std::map<std::string, std::string>& kv);
};

/// Slaney-scale triangular filterbank with area normalization,
/// shape [n_mels, n_fft / 2 + 1], float64.
torch::Tensor mel_filterbank(const MelParams& params);

/// log(1 + mel(|STFT|)) over the last dimension of a [N] or [B, N] tensor.
/// Differentiable; works in float32 and float64.
class MelTransform {
 public:
  explicit MelTransform(MelParams params = {});

  /// [N] -> [n_mels, T] or [B, N] -> [B, n_mels, T].
  torch::Tensor operator()(const torch::Tensor& audio) const;

  const MelParams& params() const { return params_; }

 private:
  MelParams params_;
  torch::Tensor filterbank_;
  torch::Tensor window_;
};

struct MelSpectrogram {
  /// [n_mels, T], float32, all entries >= 0.
  torch::Tensor frames;
  MelParams params;

  int64_t n_mels() const { return frames.size(0); }
  int64_t n_frames() const { return frames.size(1); }
};

/// Throws DataError when the clip is shorter than one FFT frame or its rate
/// disagrees with params.sample_rate.
MelSpectrogram mel_spectrogram(const Waveform& wave, const MelParams& params = {});

struct OnsetEnvelope {
  std::vector<float> strength;
  double frame_rate = 0.0;
  double duration_seconds = 0.0;
};

/// Half-wave rectified first difference of the log-mel frames, summed over
/// bands. Frame 0 is zero.
OnsetEnvelope onset_strength(const Waveform& wave, const MelParams& params = {});

struct BeatPolicy {
  /// Centered window for the adaptive threshold.
  double window_seconds = 1.0;
  /// Threshold = local mean + threshold_std * local standard deviation.
  double threshold_std = 1.5;
  double min_gap_seconds = 0.1;
};

/// Strictly increasing beat times in seconds, all within [0, duration).
struct BeatList {
  std::vector<double> times;

  size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
};

/// Local maxima of the envelope above an adaptive threshold. When two peaks
/// fall closer than the minimum gap the stronger one wins.
BeatList detect_beats(const OnsetEnvelope& envelope, const BeatPolicy& policy = {});

/// onset_strength + detect_beats with default parameters.
BeatList detect_beats(const Waveform& wave);

struct DenoiseParams {
  int n_fft = 1024;
  int hop = 256;
  /// Share of lowest-energy frames used for the noise profile.
  double noise_fraction = 0.1;
  double threshold_std = 1.5;
  /// Median filter width (bins) applied across frequency to the noise
  /// profile, so stationary tones are not mistaken for noise.
  int profile_smoothing_bins = 31;
};

/// Stationary spectral gating. Output has the input's length and rate.
/// Clips shorter than one FFT frame are returned unchanged.
Waveform spectral_denoise(const Waveform& wave, const DenoiseParams& params = {});

/// Pearson correlation of two equally long sample vectors.
double correlation(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace m2m

#endif  // M2M_AUDIO_HPP_
