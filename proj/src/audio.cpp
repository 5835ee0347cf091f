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

#include "m2m/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

namespace m2m {
namespace {

constexpr double kPi = 3.14159265358979323846;

uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void write_u16(std::ostream& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void write_u32(std::ostream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

double hz_to_mel(double hz) {
  constexpr double kLinearSpacing = 200.0 / 3.0;
  constexpr double kBreakHz = 1000.0;
  const double log_step = std::log(6.4) / 27.0;
  if (hz < kBreakHz) return hz / kLinearSpacing;
  return kBreakHz / kLinearSpacing + std::log(hz / kBreakHz) / log_step;
}

double mel_to_hz(double mel) {
  constexpr double kLinearSpacing = 200.0 / 3.0;
  constexpr double kBreakHz = 1000.0;
  const double break_mel = kBreakHz / kLinearSpacing;
  const double log_step = std::log(6.4) / 27.0;
  if (mel < break_mel) return mel * kLinearSpacing;
  return kBreakHz * std::exp(log_step * (mel - break_mel));
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

std::vector<float> median_filter(const std::vector<float>& v, int width) {
  const int n = static_cast<int>(v.size());
  const int half = width / 2;
  std::vector<float> out(v.size());
  std::vector<float> buf;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n, i + half + 1);
    buf.assign(v.begin() + lo, v.begin() + hi);
    auto mid = buf.begin() + buf.size() / 2;
    std::nth_element(buf.begin(), mid, buf.end());
    out[i] = *mid;
  }
  return out;
}

torch::Tensor to_tensor(const Waveform& wave) {
  return torch::from_blob(const_cast<float*>(wave.samples.data()),
                          {static_cast<int64_t>(wave.samples.size())}, torch::kFloat32)
      .clone();
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(path.string() + ": not a RIFF/WAVE file");
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  size_t data_size = 0;
  bool have_fmt = false;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t size = read_u32(chunk + 4);
    const size_t body = pos + 8;
    const size_t available = std::min<size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (available < 16) throw DataError(path.string() + ": truncated fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && available >= 26) format = read_u16(chunk + 32);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = available;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt || data == nullptr) {
    throw DataError(path.string() + ": missing fmt or data chunk");
  }
  if (channels == 0 || rate == 0) throw DataError(path.string() + ": invalid fmt chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    throw DataError(path.string() + ": unsupported encoding (format " +
                    std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  }

  const size_t frame_bytes = static_cast<size_t>(channels) * (bits / 8);
  const size_t frames = data_size / frame_bytes;
  if (frames == 0) throw DataError(path.string() + ": zero-length audio");

  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  wave.samples.resize(frames);
  for (size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<int16_t>(read_u16(p)) / 32768.0;
      } else {
        float v;
        const uint32_t raw = read_u32(p);
        std::memcpy(&v, &raw, sizeof v);
        acc += std::isfinite(v) ? std::clamp(v, -1.0f, 1.0f) : 0.0f;
      }
    }
    wave.samples[f] = static_cast<float>(acc / channels);
  }
  return wave;
}

Waveform load_audio(const std::filesystem::path& path) {
  Waveform wave = resample(load_wav(path), kSampleRate);
  for (float& s : wave.samples) s = std::clamp(s, -1.0f, 1.0f);
  return wave;
}

void save_wav(const Waveform& wave, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audio file " + path.string());
  const uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_u32(out, 16);
  write_u16(out, 1);
  write_u16(out, 1);
  write_u32(out, static_cast<uint32_t>(wave.sample_rate));
  write_u32(out, static_cast<uint32_t>(wave.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (float s : wave.samples) {
    const double x = std::isfinite(s) ? std::clamp<double>(s, -1.0, 1.0) : 0.0;
    const long code = std::clamp<long>(std::lround(x * 32768.0), -32768, 32767);
    write_u16(out, static_cast<uint16_t>(static_cast<int16_t>(code)));
  }
  if (!out) throw DataError("failed writing audio file " + path.string());
}

Waveform resample(const Waveform& wave, int target_rate) {
  if (target_rate <= 0) {
    throw ConfigError("resample: target rate must be positive, got " +
                      std::to_string(target_rate));
  }
  if (wave.sample_rate <= 0) throw DataError("resample: source rate must be positive");
  if (target_rate == wave.sample_rate) return wave;

  const double ratio = static_cast<double>(target_rate) / wave.sample_rate;
  const auto n_in = static_cast<int64_t>(wave.samples.size());
  const auto n_out = static_cast<int64_t>(std::llround(n_in * ratio));

  // Cutoff as a fraction of the input Nyquist, with a little roll-off room.
  const double cutoff = 0.94 * std::min(1.0, ratio);
  constexpr double kZeroCrossings = 32.0;
  constexpr double kBeta = 8.6;
  const double half_width = kZeroCrossings / cutoff;
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<size_t>(n_out));
  for (int64_t i = 0; i < n_out; ++i) {
    const double t = i / ratio;
    const auto lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(t - half_width)));
    const auto hi = std::min<int64_t>(n_in - 1, static_cast<int64_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (int64_t n = lo; n <= hi; ++n) {
      const double d = t - n;
      const double u = d / half_width;
      const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0_beta;
      acc += wave.samples[n] * cutoff * sinc(cutoff * d) * window;
    }
    out.samples[i] = static_cast<float>(acc);
  }
  return out;
}

std::map<std::string, std::string> MelParams::to_key_values() const {
  return {{"mel.sample_rate", std::to_string(sample_rate)},
          {"mel.n_fft", std::to_string(n_fft)},
          {"mel.hop", std::to_string(hop)},
          {"mel.n_mels", std::to_string(n_mels)},
          {"mel.f_min", std::to_string(f_min)},
          {"mel.f_max", std::to_string(f_max)}};
}

MelParams MelParams::from_key_values(const std::map<std::string, std::string>& kv) {
  MelParams p;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  try {
    if (auto v = get("mel.sample_rate")) p.sample_rate = std::stoi(*v);
    if (auto v = get("mel.n_fft")) p.n_fft = std::stoi(*v);
    if (auto v = get("mel.hop")) p.hop = std::stoi(*v);
    if (auto v = get("mel.n_mels")) p.n_mels = std::stoi(*v);
    if (auto v = get("mel.f_min")) p.f_min = std::stod(*v);
    if (auto v = get("mel.f_max")) p.f_max = std::stod(*v);
  } catch (const std::exception& e) {
    throw DataError(std::string("malformed mel parameters: ") + e.what());
  }
  return p;
}

torch::Tensor mel_filterbank(const MelParams& params) {
  const int n_bins = params.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(params.f_min);
  const double mel_hi = hz_to_mel(params.upper_frequency());
  std::vector<double> edges(params.n_mels + 2);
  for (int i = 0; i < params.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (params.n_mels + 1));
  }
  auto fb = torch::zeros({params.n_mels, n_bins}, torch::kFloat64);
  auto acc = fb.accessor<double, 2>();
  for (int m = 0; m < params.n_mels; ++m) {
    const double lower = edges[m], center = edges[m + 1], upper = edges[m + 2];
    const double norm = 2.0 / (upper - lower);
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * params.sample_rate / params.n_fft;
      const double rise = (f - lower) / (center - lower);
      const double fall = (upper - f) / (upper - center);
      acc[m][k] = std::max(0.0, std::min(rise, fall)) * norm;
    }
  }
  return fb;
}

MelTransform::MelTransform(MelParams params)
    : params_(params),
      filterbank_(mel_filterbank(params)),
      window_(torch::hann_window(params.n_fft, torch::TensorOptions().dtype(torch::kFloat64))) {}

torch::Tensor MelTransform::operator()(const torch::Tensor& audio) const {
  const bool batched = audio.dim() == 2;
  TORCH_CHECK(audio.dim() == 1 || batched, "MelTransform expects [N] or [B, N]");
  const auto dtype = audio.scalar_type();
  auto spec = torch::stft(audio, params_.n_fft, params_.hop, params_.n_fft,
                          window_.to(dtype), /*center=*/true, "reflect",
                          /*normalized=*/false, /*onesided=*/true,
                          /*return_complex=*/true);
  auto magnitude = spec.abs();
  auto mel = torch::matmul(filterbank_.to(dtype), magnitude);
  return torch::log1p(mel);
}

MelSpectrogram mel_spectrogram(const Waveform& wave, const MelParams& params) {
  if (wave.sample_rate != params.sample_rate) {
    throw DataError("mel_spectrogram: waveform rate " + std::to_string(wave.sample_rate) +
                    " does not match mel rate " + std::to_string(params.sample_rate));
  }
  if (wave.samples.size() < static_cast<size_t>(params.n_fft)) {
    throw DataError("mel_spectrogram: clip shorter than one frame (" +
                    std::to_string(wave.samples.size()) + " < " +
                    std::to_string(params.n_fft) + " samples)");
  }
  torch::NoGradGuard no_grad;
  MelTransform transform(params);
  return {transform(to_tensor(wave)).contiguous(), params};
}

OnsetEnvelope onset_strength(const Waveform& wave, const MelParams& params) {
  const MelSpectrogram mel = mel_spectrogram(wave, params);
  auto frames = mel.frames.to(torch::kFloat64);
  auto diff = (frames.slice(1, 1) - frames.slice(1, 0, -1)).clamp_min(0.0).sum(0);
  OnsetEnvelope env;
  env.frame_rate = static_cast<double>(params.sample_rate) / params.hop;
  env.duration_seconds = wave.duration_seconds();
  env.strength.assign(static_cast<size_t>(mel.n_frames()), 0.0f);
  auto acc = diff.accessor<double, 1>();
  for (int64_t t = 0; t < diff.size(0); ++t) {
    env.strength[static_cast<size_t>(t + 1)] = static_cast<float>(acc[t]);
  }
  return env;
}

BeatList detect_beats(const OnsetEnvelope& envelope, const BeatPolicy& policy) {
  const auto& s = envelope.strength;
  const auto n = static_cast<int64_t>(s.size());
  BeatList beats;
  if (n == 0 || envelope.frame_rate <= 0.0) return beats;

  std::vector<double> sum(n + 1, 0.0), sum_sq(n + 1, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    sum[i + 1] = sum[i] + s[i];
    sum_sq[i + 1] = sum_sq[i] + static_cast<double>(s[i]) * s[i];
  }
  const auto half = static_cast<int64_t>(std::llround(policy.window_seconds * envelope.frame_rate / 2.0));

  struct Peak {
    int64_t frame;
    float strength;
  };
  std::vector<Peak> peaks;
  for (int64_t t = 0; t < n; ++t) {
    const float v = s[t];
    if (!(v > 0.0f)) continue;
    if (t > 0 && s[t - 1] > v) continue;
    if (t + 1 < n && s[t + 1] >= v) continue;
    const int64_t lo = std::max<int64_t>(0, t - half);
    const int64_t hi = std::min<int64_t>(n, t + half + 1);
    const double count = static_cast<double>(hi - lo);
    const double mean = (sum[hi] - sum[lo]) / count;
    const double var = std::max(0.0, (sum_sq[hi] - sum_sq[lo]) / count - mean * mean);
    if (v > mean + policy.threshold_std * std::sqrt(var)) peaks.push_back({t, v});
  }

  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.strength > b.strength; });
  const double min_gap_frames = policy.min_gap_seconds * envelope.frame_rate;
  std::vector<int64_t> kept;
  for (const Peak& p : peaks) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](int64_t k) {
      return std::abs(static_cast<double>(k - p.frame)) < min_gap_frames;
    });
    if (!clash) kept.push_back(p.frame);
  }
  std::sort(kept.begin(), kept.end());
  for (int64_t frame : kept) {
    const double time = frame / envelope.frame_rate;
    if (time < envelope.duration_seconds) beats.times.push_back(time);
  }
  return beats;
}

BeatList detect_beats(const Waveform& wave) { return detect_beats(onset_strength(wave)); }

Waveform spectral_denoise(const Waveform& wave, const DenoiseParams& params) {
  if (wave.samples.size() < static_cast<size_t>(params.n_fft)) return wave;
  torch::NoGradGuard no_grad;

  const auto n = static_cast<int64_t>(wave.samples.size());
  auto audio = to_tensor(wave).to(torch::kFloat64);
  auto window = torch::hann_window(params.n_fft, torch::TensorOptions().dtype(torch::kFloat64));
  auto spec = torch::stft(audio, params.n_fft, params.hop, params.n_fft, window,
                          /*center=*/true, "reflect", /*normalized=*/false,
                          /*onesided=*/true, /*return_complex=*/true);
  auto magnitude = spec.abs();
  auto db = 20.0 * torch::log10(magnitude.clamp_min(1e-10));
  const int64_t bins = db.size(0);
  const int64_t frames = db.size(1);

  // Noise profile from the quietest frames.
  auto energy = (magnitude * magnitude).sum(0);
  auto order = std::get<1>(energy.sort(/*stable=*/true, /*dim=*/0, /*descending=*/false));
  const int64_t quiet = std::max<int64_t>(
      1, static_cast<int64_t>(std::ceil(params.noise_fraction * static_cast<double>(frames))));
  auto noise_db = db.index_select(1, order.slice(0, 0, quiet));
  auto mean = noise_db.mean(1);
  auto stdev = (noise_db - mean.unsqueeze(1)).pow(2).mean(1).sqrt();

  std::vector<float> mean_v(bins), std_v(bins);
  auto mean_acc = mean.accessor<double, 1>();
  auto std_acc = stdev.accessor<double, 1>();
  for (int64_t k = 0; k < bins; ++k) {
    mean_v[k] = static_cast<float>(mean_acc[k]);
    std_v[k] = static_cast<float>(std_acc[k]);
  }
  mean_v = median_filter(mean_v, params.profile_smoothing_bins);
  std_v = median_filter(std_v, params.profile_smoothing_bins);

  auto threshold = torch::empty({bins, 1}, torch::kFloat64);
  auto th = threshold.accessor<double, 2>();
  for (int64_t k = 0; k < bins; ++k) th[k][0] = mean_v[k] + params.threshold_std * std_v[k];

  auto mask = (db > threshold).to(torch::kFloat64);
  auto gated = spec * mask;
  auto restored = torch::istft(gated, params.n_fft, params.hop, params.n_fft, window,
                               /*center=*/true, /*normalized=*/false, /*onesided=*/true,
                               /*length=*/n);
  restored = restored.to(torch::kFloat32).contiguous();

  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.assign(restored.data_ptr<float>(), restored.data_ptr<float>() + n);
  for (float& s : out.samples) {
    if (!std::isfinite(s)) s = 0.0f;
    s = std::clamp(s, -1.0f, 1.0f);
  }
  return out;
}

double correlation(const std::vector<float>& a, const std::vector<float>& b) {
  const size_t n = std::min(a.size(), b.size());
  if (n == 0) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace m2m
