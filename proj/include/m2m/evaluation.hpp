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

// Objective metrics: beat coverage and hit against ground-truth beats, and
// genre accuracy by nearest-neighbour retrieval over audio embeddings.

#ifndef M2M_EVALUATION_HPP_
#define M2M_EVALUATION_HPP_

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "m2m/audio.hpp"
#include "m2m/data.hpp"

namespace m2m {

inline constexpr double kBeatTolerance = 0.07;

struct BeatScores {
  /// generated / ground-truth beat count; may exceed 1.
  double coverage = 0.0;
  /// aligned / ground-truth beat count.
  double hit = 0.0;
  size_t generated_beats = 0;
  size_t gt_beats = 0;
  size_t aligned_beats = 0;
};

/// Size of a greedy one-to-one matching: pairs within `tolerance` seconds
/// are taken closest first (ties by generated, then ground-truth order).
size_t count_aligned_beats(const std::vector<double>& generated, const std::vector<double>& gt,
                           double tolerance);

/// Throws DataError when the ground truth has no beats.
BeatScores beat_scores(const BeatList& generated, const BeatList& gt,
                       double tolerance = kBeatTolerance);

/// Detects beats in both clips. Throws DataError when the durations differ
/// or the ground truth has no beats.
BeatScores beat_scores(const Waveform& generated, const Waveform& gt,
                       double tolerance = kBeatTolerance);

class AudioEmbedder {
 public:
  virtual ~AudioEmbedder() = default;
  virtual std::vector<float> embed(const Waveform& wave) = 0;
  virtual size_t dimension() const = 0;
  virtual std::string name() const = 0;
};

/// Per-band mean and standard deviation of the log-mel matrix after peak
/// normalization; 2 * n_mels values. Silence stays unnormalized.
class MelStatsEmbedder : public AudioEmbedder {
 public:
  explicit MelStatsEmbedder(MelParams params = {});
  std::vector<float> embed(const Waveform& wave) override;
  size_t dimension() const override { return 2 * static_cast<size_t>(params_.n_mels); }
  std::string name() const override { return "melstats"; }

 private:
  MelParams params_;
};

/// Content-independent baseline: the k-th call returns a Gaussian vector
/// seeded by seed + k.
class RandomEmbedder : public AudioEmbedder {
 public:
  explicit RandomEmbedder(uint64_t seed = 0, size_t dimension = 160);
  std::vector<float> embed(const Waveform& wave) override;
  size_t dimension() const override { return dimension_; }
  std::string name() const override { return "random"; }

 private:
  uint64_t seed_;
  size_t dimension_;
  uint64_t calls_ = 0;
};

/// Builds an embedder by name ("melstats" or "random").
std::unique_ptr<AudioEmbedder> make_embedder(const std::string& name, uint64_t seed = 0);

struct RetrievalEntry {
  std::vector<float> embedding;
  std::string genre;
  std::string segment_id;
};

class RetrievalDatabase {
 public:
  /// Throws DataError when the embedding dimension differs from earlier entries.
  void add(RetrievalEntry entry);
  /// Nearest entry by Euclidean distance; ties go to the lowest segment id.
  const RetrievalEntry& nearest(const std::vector<float>& query) const;

  size_t size() const { return entries_.size(); }
  size_t dimension() const { return entries_.empty() ? 0 : entries_.front().embedding.size(); }
  const std::vector<RetrievalEntry>& entries() const { return entries_; }

 private:
  std::vector<RetrievalEntry> entries_;
};

struct GenreQuery {
  std::vector<float> embedding;
  std::string genre;
};

/// Share of queries whose nearest database entry carries the query's genre.
/// Throws DataError for an empty database or query set and on a dimension
/// mismatch.
double genre_accuracy(const std::vector<GenreQuery>& queries, const RetrievalDatabase& db);

struct ClipEvaluation {
  std::string clip_id;
  std::string genre;
  BeatScores beats;
  std::string retrieved_genre;
  std::string retrieved_segment;
};

struct EvaluationReport {
  double clip_seconds = 0.0;
  double tolerance = kBeatTolerance;
  std::string embedder;
  std::string split;
  double coverage = 0.0;
  double hit = 0.0;
  double genre_accuracy = 0.0;
  std::vector<ClipEvaluation> clips;
};

struct EvaluationClip {
  std::string clip_id;
  std::string genre;
  Waveform generated;
  Waveform ground_truth;
};

/// Scores generated clips against their ground truth and retrieves each
/// generated clip's genre from `db`. Ground truth is cropped to the
/// generated length.
EvaluationReport evaluate_clips(const std::vector<EvaluationClip>& clips,
                                const RetrievalDatabase& db, AudioEmbedder& embedder,
                                double tolerance = kBeatTolerance);

/// Ground-truth clips of `split` embedded into a retrieval database, each
/// cropped to `samples` when positive.
RetrievalDatabase build_database(const DatasetManifest& manifest, Split split,
                                 AudioEmbedder& embedder, int64_t samples = 0);

void write_report(const EvaluationReport& report, const std::filesystem::path& path);

class Checkpoint;

struct RunEvaluationOptions {
  Split split = Split::kTest;
  double tolerance = kBeatTolerance;
  bool denoise = false;
  std::string embedder = "melstats";
  uint64_t seed = 0;
  /// Scores the ground truth against itself instead of generating.
  bool ground_truth_as_generated = false;
};

/// Generates music for every clip of the chosen split and scores it. The
/// retrieval database holds the ground-truth training clips (every other
/// clip when the training split is empty). Throws DataError for an empty split.
EvaluationReport evaluate_run(Checkpoint& checkpoint, const DatasetManifest& manifest,
                              const RunEvaluationOptions& options);

}  // namespace m2m

#endif  // M2M_EVALUATION_HPP_
