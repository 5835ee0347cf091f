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

// Dataset manifests, motion and visual feature files, song-disjoint splits
// and the synthetic toy corpus.
//
// Directory layout under a dataset root:
//   audio/<song>.wav       one recording per song
//   motion/<song>.txt      one motion track per song
//   visual/<song>.txt      optional precomputed visual features per song
//   manifests/<name>.json  clip records; paths are relative to the root
//
// Motion files are text. The first line is a header, e.g.
//   # keypoints2d fps=60 width=1280 height=720 joints=17
//   # smpl fps=60
// followed by one frame per line: 17 (x, y, confidence) triples in COCO
// joint order for keypoints (confidence 0 marks a missing joint), or 72
// axis-angle values plus a 3-value root translation for SMPL.
//
// Visual feature files hold "# visual dim=1024 window=0.5" and one
// 1024-value line per window.

#ifndef M2M_DATA_HPP_
#define M2M_DATA_HPP_

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "m2m/audio.hpp"
#include "m2m/model.hpp"

namespace m2m {

enum class Split { kTrain, kVal, kTest };
std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct ClipRecord {
  std::string clip_id;
  std::string song_id;
  std::string genre;
  Split split = Split::kTrain;
  /// Relative to the manifest root.
  std::string audio_path;
  std::string motion_path;
  MotionRepresentation motion_representation = MotionRepresentation::kKeypoints2d;
  /// Empty when the dataset has no visual features.
  std::string visual_path;
  double start_seconds = 0.0;
  double end_seconds = 0.0;

  double duration() const { return end_seconds - start_seconds; }
};

struct DatasetManifest {
  /// Directory the record paths are relative to.
  std::filesystem::path root;
  int sample_rate = kSampleRate;
  double motion_fps = 60.0;
  double clip_seconds = 2.0;
  std::vector<std::string> genres;
  std::vector<ClipRecord> records;

  std::vector<ClipRecord> records_in(Split split) const;
  int genre_index(const std::string& genre) const;
};

/// Parses and validates a manifest: schema, clip lengths, referenced files
/// and train/(val, test) song disjointness. Throws DataError naming the
/// offending field, file or song id. `root` defaults to the parent of the
/// manifests/ directory holding the file.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes JSON with records in their given order. Does not validate.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Throws DataError if a song id occurs in train and in val or test.
void check_song_disjoint(const std::vector<ClipRecord>& records);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Shuffles the distinct song ids with a seeded generator and assigns whole
/// songs to splits in proportion to `ratios`. Every split with a positive
/// ratio receives at least one song. Throws DataError when there are fewer
/// songs than such splits.
std::vector<ClipRecord> split_by_song(std::vector<ClipRecord> records, const SplitRatios& ratios,
                                      uint64_t seed);

/// Applies an explicit song -> split assignment (e.g. official split lists).
/// Throws DataError for a song without an assignment.
std::vector<ClipRecord> assign_splits(std::vector<ClipRecord> records,
                                      const std::map<std::string, Split>& song_splits);

/// Fixed-stride windows over `source` (whose start/end give the recording
/// extent). Clip ids are "<source id>_<k>" with k zero-padded to 3 digits.
std::vector<ClipRecord> segment_clips(const ClipRecord& source, double clip_seconds,
                                      double stride_seconds);

/// Loads a motion file and resamples it to 60 fps. Keypoints are divided by
/// the frame width and height; missing joints are zero. When
/// `expected_seconds` is given, a frame count off by more than 10% is a
/// DataError.
MotionSequence load_motion(const std::filesystem::path& path, MotionRepresentation representation,
                           std::optional<double> expected_seconds = std::nullopt);

/// Writes raw keypoint frames [T, 17, 3] (pixel x, y, confidence).
void save_keypoints(const std::filesystem::path& path, const torch::Tensor& frames, double fps,
                    int width, int height);
/// Writes raw SMPL frames [T, 75].
void save_smpl(const std::filesystem::path& path, const torch::Tensor& frames, double fps);

/// Throws DataError unless the file declares and holds 1024-dim rows.
VisualFeatureSequence load_visual_features(const std::filesystem::path& path);
/// Writes [1024, T_v] features.
void save_visual_features(const std::filesystem::path& path, const VisualFeatureSequence& features);

struct ClipExample {
  std::string clip_id;
  std::string genre;
  int genre_index = -1;
  /// [N] float32 at kSampleRate.
  torch::Tensor audio;
  /// [C_m, T_m]
  torch::Tensor motion;
  /// [1024, T_v]; zeros when the record has no visual features and
  /// visual input is disabled.
  torch::Tensor visual;
};

struct ClipLoadOptions {
  bool use_visual = true;
};

/// Every stream of one recording, loaded once and cut into clips on demand.
struct SongData {
  std::string song_id;
  std::string genre;
  int genre_index = -1;
  /// [N] float32 at kSampleRate.
  torch::Tensor audio;
  MotionSequence motion;
  /// Undefined features when visual input is disabled.
  VisualFeatureSequence visual;

  double duration_seconds() const { return static_cast<double>(audio.size(0)) / kSampleRate; }
};

SongData load_song(const DatasetManifest& manifest, const ClipRecord& record,
                   const ClipLoadOptions& options = {});

/// Cuts every stream to [start, start + seconds). Throws DataError when the
/// span leaves any stream.
ClipExample cut_clip(const SongData& song, double start_seconds, double seconds,
                     const std::string& clip_id);

/// load_song + cut_clip for the record's own span.
ClipExample load_clip(const DatasetManifest& manifest, const ClipRecord& record,
                      const ClipLoadOptions& options = {});

struct ToyGenre {
  std::string name;
  double tempo_bpm;
  double click_hz;
  std::vector<double> partials_hz;
};

/// Default genre table; tempos are multiples of 30 BPM so every 2 s clip
/// holds a whole number of beats.
std::vector<ToyGenre> default_toy_genres(int count);

struct ToyDatasetConfig {
  int genres = 2;
  int clips = 40;
  int clips_per_song = 2;
  double clip_seconds = 2.0;
  double noise_level = 0.001;
  SplitRatios ratios;
  uint64_t seed = 0;
};

/// One song of the toy corpus: click track at (k + 0.5) beat periods plus a
/// harmonic bed with random phases.
Waveform synth_toy_audio(const ToyGenre& genre, double seconds, uint64_t seed,
                         double noise_level = 0.001);

/// Beat times of synth_toy_audio.
std::vector<double> toy_click_times(const ToyGenre& genre, double seconds);

/// Writes audio/, motion/, visual/ and manifests/toy.json under `root` and
/// returns the manifest. Throws ConfigError for fewer than 2 genres, a
/// non-positive tempo or a clip count below the genre count.
DatasetManifest synth_toy_dataset(const std::filesystem::path& root, const ToyDatasetConfig& cfg);

}  // namespace m2m

#endif  // M2M_DATA_HPP_
