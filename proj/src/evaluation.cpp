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

#include "m2m/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <tuple>

#include "json.hpp"
#include "m2m/training.hpp"

namespace m2m {
namespace {

Waveform to_waveform(const torch::Tensor& audio) {
  auto a = audio.contiguous();
  Waveform w;
  w.samples.assign(a.data_ptr<float>(), a.data_ptr<float>() + a.numel());
  return w;
}

Waveform cropped(const Waveform& w, size_t n) {
  Waveform out = w;
  if (out.samples.size() > n) out.samples.resize(n);
  return out;
}

}  // namespace

size_t count_aligned_beats(const std::vector<double>& generated, const std::vector<double>& gt,
                           double tolerance) {
  std::vector<std::tuple<double, size_t, size_t>> pairs;
  for (size_t i = 0; i < generated.size(); ++i) {
    for (size_t j = 0; j < gt.size(); ++j) {
      const double d = std::abs(generated[i] - gt[j]);
      if (d <= tolerance) pairs.emplace_back(d, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> used_g(generated.size()), used_t(gt.size());
  size_t matched = 0;
  for (const auto& [d, i, j] : pairs) {
    if (used_g[i] || used_t[j]) continue;
    used_g[i] = used_t[j] = true;
    ++matched;
  }
  return matched;
}

BeatScores beat_scores(const BeatList& generated, const BeatList& gt, double tolerance) {
  if (gt.empty()) throw DataError("ground truth has no detected beats");
  BeatScores s;
  s.generated_beats = generated.size();
  s.gt_beats = gt.size();
  s.aligned_beats = count_aligned_beats(generated.times, gt.times, tolerance);
  s.coverage = static_cast<double>(s.generated_beats) / s.gt_beats;
  s.hit = static_cast<double>(s.aligned_beats) / s.gt_beats;
  return s;
}

BeatScores beat_scores(const Waveform& generated, const Waveform& gt, double tolerance) {
  if (generated.size() != gt.size() || generated.sample_rate != gt.sample_rate) {
    throw DataError("beat_scores needs clips of equal duration");
  }
  return beat_scores(detect_beats(generated), detect_beats(gt), tolerance);
}

// --- Embedders ---------------------------------------------------------------

MelStatsEmbedder::MelStatsEmbedder(MelParams params) : params_(params) {}

std::vector<float> MelStatsEmbedder::embed(const Waveform& wave) {
  Waveform w = wave;
  float peak = 0.0f;
  for (float v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0f) {
    for (float& v : w.samples) v /= peak;
  }
  const auto mel = mel_spectrogram(w, params_).frames.to(torch::kFloat64);
  const auto mean = mel.mean(1);
  const auto std = (mel - mean.unsqueeze(1)).pow(2).mean(1).sqrt();
  auto stats = torch::cat({mean, std}).to(torch::kFloat32).contiguous();
  return {stats.data_ptr<float>(), stats.data_ptr<float>() + stats.numel()};
}

RandomEmbedder::RandomEmbedder(uint64_t seed, size_t dimension)
    : seed_(seed), dimension_(dimension) {}

std::vector<float> RandomEmbedder::embed(const Waveform&) {
  std::mt19937_64 rng(seed_ + calls_++);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> v(dimension_);
  for (auto& x : v) x = normal(rng);
  return v;
}

std::unique_ptr<AudioEmbedder> make_embedder(const std::string& name, uint64_t seed) {
  if (name == "melstats") return std::make_unique<MelStatsEmbedder>();
  if (name == "random") return std::make_unique<RandomEmbedder>(seed);
  throw ConfigError("unknown embedder '" + name + "' (expected melstats or random)");
}

// --- Retrieval ---------------------------------------------------------------

void RetrievalDatabase::add(RetrievalEntry entry) {
  if (entry.embedding.empty()) throw DataError("empty embedding");
  if (!entries_.empty() && entry.embedding.size() != dimension()) {
    throw DataError("embedding dimension " + std::to_string(entry.embedding.size()) +
                    " differs from the database's " + std::to_string(dimension()));
  }
  entries_.push_back(std::move(entry));
}

const RetrievalEntry& RetrievalDatabase::nearest(const std::vector<float>& query) const {
  if (entries_.empty()) throw DataError("retrieval database is empty");
  if (query.size() != dimension()) {
    throw DataError("query dimension " + std::to_string(query.size()) +
                    " does not match the database's " + std::to_string(dimension()));
  }
  const RetrievalEntry* best = nullptr;
  double best_d = 0.0;
  for (const auto& e : entries_) {
    double d = 0.0;
    for (size_t i = 0; i < query.size(); ++i) {
      const double diff = static_cast<double>(query[i]) - e.embedding[i];
      d += diff * diff;
    }
    if (!best || d < best_d || (d == best_d && e.segment_id < best->segment_id)) {
      best = &e;
      best_d = d;
    }
  }
  return *best;
}

double genre_accuracy(const std::vector<GenreQuery>& queries, const RetrievalDatabase& db) {
  if (queries.empty()) throw DataError("no retrieval queries");
  size_t correct = 0;
  for (const auto& q : queries) correct += db.nearest(q.embedding).genre == q.genre;
  return static_cast<double>(correct) / queries.size();
}

// --- Reports -----------------------------------------------------------------

EvaluationReport evaluate_clips(const std::vector<EvaluationClip>& clips,
                                const RetrievalDatabase& db, AudioEmbedder& embedder,
                                double tolerance) {
  if (clips.empty()) throw DataError("nothing to evaluate");
  EvaluationReport report;
  report.tolerance = tolerance;
  report.embedder = embedder.name();
  report.clip_seconds = clips.front().generated.duration_seconds();
  size_t correct = 0;
  for (const auto& c : clips) {
    ClipEvaluation e;
    e.clip_id = c.clip_id;
    e.genre = c.genre;
    const auto gt = cropped(c.ground_truth, c.generated.size());
    e.beats = beat_scores(c.generated, gt, tolerance);
    const auto& hit = db.nearest(embedder.embed(c.generated));
    e.retrieved_genre = hit.genre;
    e.retrieved_segment = hit.segment_id;
    correct += hit.genre == c.genre;
    report.coverage += e.beats.coverage;
    report.hit += e.beats.hit;
    report.clips.push_back(std::move(e));
  }
  report.coverage /= clips.size();
  report.hit /= clips.size();
  report.genre_accuracy = static_cast<double>(correct) / clips.size();
  return report;
}

RetrievalDatabase build_database(const DatasetManifest& manifest, Split split,
                                 AudioEmbedder& embedder, int64_t samples) {
  RetrievalDatabase db;
  for (const auto& r : manifest.records_in(split)) {
    auto clip = load_clip(manifest, r, ClipLoadOptions{false});
    auto wave = to_waveform(clip.audio);
    if (samples > 0) wave = cropped(wave, static_cast<size_t>(samples));
    db.add({embedder.embed(wave), r.genre, r.clip_id});
  }
  return db;
}

void write_report(const EvaluationReport& report, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["split"] = report.split;
  j["clip_seconds"] = report.clip_seconds;
  j["tolerance_seconds"] = report.tolerance;
  j["embedder"] = report.embedder;
  j["clips_evaluated"] = report.clips.size();
  j["beats_coverage"] = report.coverage;
  j["beats_hit"] = report.hit;
  j["genre_accuracy"] = report.genre_accuracy;
  j["clips"] = nlohmann::ordered_json::array();
  for (const auto& c : report.clips) {
    nlohmann::ordered_json jc;
    jc["clip_id"] = c.clip_id;
    jc["genre"] = c.genre;
    jc["coverage"] = c.beats.coverage;
    jc["hit"] = c.beats.hit;
    jc["generated_beats"] = c.beats.generated_beats;
    jc["gt_beats"] = c.beats.gt_beats;
    jc["aligned_beats"] = c.beats.aligned_beats;
    jc["retrieved_genre"] = c.retrieved_genre;
    jc["retrieved_segment"] = c.retrieved_segment;
    j["clips"].push_back(jc);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report " + path.string());
  out << j.dump(2) << '\n';
}

EvaluationReport evaluate_run(Checkpoint& checkpoint, const DatasetManifest& manifest,
                              const RunEvaluationOptions& options) {
  const double seconds = checkpoint.config.clip_seconds;
  const auto spans = training_spans(manifest, options.split, seconds);
  if (spans.empty()) {
    throw DataError("split '" + std::string(to_string(options.split)) + "' has no clips of " +
                    format_double(seconds) + " s");
  }
  auto embedder = make_embedder(options.embedder, options.seed);
  const int64_t samples =
      code_count(std::llround(seconds * kSampleRate), checkpoint.config.level) *
      hop_length(checkpoint.config.level);

  const ClipLoadOptions load{!checkpoint.config.no_visual};
  std::map<std::string, SongData> songs;
  auto song = [&](const std::string& id) -> const SongData& {
    auto it = songs.find(id);
    if (it != songs.end()) return it->second;
    for (const auto& r : manifest.records) {
      if (r.song_id == id) return songs.emplace(id, load_song(manifest, r, load)).first->second;
    }
    throw DataError("song '" + id + "' has no records");
  };

  // Database: ground-truth training clips, or every other split when there
  // is no training split to draw from.
  RetrievalDatabase db;
  const bool have_train = options.split != Split::kTrain && !manifest.records_in(Split::kTrain).empty();
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    if (s == options.split || (have_train && s != Split::kTrain)) continue;
    for (const auto& span : training_spans(manifest, s, seconds)) {
      auto clip = cut_clip(song(span.song_id), span.start_seconds, seconds, span.clip_id);
      db.add({embedder->embed(cropped(to_waveform(clip.audio), static_cast<size_t>(samples))),
              song(span.song_id).genre, span.clip_id});
    }
  }

  std::vector<EvaluationClip> clips;
  for (const auto& span : spans) {
    auto ex = cut_clip(song(span.song_id), span.start_seconds, seconds, span.clip_id);
    EvaluationClip c;
    c.clip_id = span.clip_id;
    c.genre = ex.genre;
    c.ground_truth = to_waveform(ex.audio);
    if (options.ground_truth_as_generated) {
      c.generated = cropped(c.ground_truth, static_cast<size_t>(samples));
    } else {
      c.generated = generate_music(checkpoint, ex.motion, ex.visual, options.denoise).audio;
    }
    clips.push_back(std::move(c));
  }
  auto report = evaluate_clips(clips, db, *embedder, options.tolerance);
  report.split = std::string(to_string(options.split));
  report.clip_seconds = seconds;
  return report;
}

}  // namespace m2m
