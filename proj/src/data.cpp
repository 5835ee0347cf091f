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

#include "m2m/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace m2m {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kKeypointJoints = 17;
constexpr int kSmplValues = 75;
constexpr double kMotionFps = 60.0;

struct Header {
  std::string kind;
  std::map<std::string, std::string> fields;
};

Header parse_header(const std::string& line, const fs::path& path) {
  if (line.empty() || line[0] != '#') throw DataError(path.string() + ": missing '#' header line");
  std::istringstream ss(line.substr(1));
  Header h;
  ss >> h.kind;
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw DataError(path.string() + ": bad header field '" + token + "'");
    h.fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return h;
}

double header_number(const Header& h, const std::string& key, const fs::path& path) {
  auto it = h.fields.find(key);
  if (it == h.fields.end()) throw DataError(path.string() + ": header lacks '" + key + "'");
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0' || !std::isfinite(v)) {
    throw DataError(path.string() + ": bad header value " + key + "=" + it->second);
  }
  return v;
}

// Reads the remaining lines as rows of exactly `width` numbers.
std::vector<std::vector<float>> read_rows(std::istream& in, size_t width, const fs::path& path) {
  std::vector<std::vector<float>> rows;
  std::string line;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<float> row;
    row.reserve(width);
    const char* p = line.c_str();
    char* end = nullptr;
    while (true) {
      const float v = std::strtof(p, &end);
      if (end == p) break;
      if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value on line " + std::to_string(line_no));
      row.push_back(v);
      p = end;
    }
    while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
    if (*p != '\0' || row.size() != width) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(row.size()) + " values, expected " + std::to_string(width));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": no frames");
  return rows;
}

// Linear interpolation of [C, T] frames sampled at `fps` onto a 60 fps grid.
torch::Tensor resample_frames(const torch::Tensor& frames, double fps) {
  if (std::abs(fps - kMotionFps) < 1e-9) return frames;
  const int64_t t_in = frames.size(1);
  const int64_t t_out = std::max<int64_t>(1, std::llround(t_in * kMotionFps / fps));
  auto out = torch::empty({frames.size(0), t_out});
  for (int64_t i = 0; i < t_out; ++i) {
    const double pos = std::min(static_cast<double>(t_in - 1), i * fps / kMotionFps);
    const int64_t lo = static_cast<int64_t>(std::floor(pos));
    const int64_t hi = std::min(lo + 1, t_in - 1);
    const double frac = pos - lo;
    out.select(1, i).copy_(frames.select(1, lo) * (1.0 - frac) + frames.select(1, hi) * frac);
  }
  return out;
}

void write_rows(std::ostream& out, const torch::Tensor& rows) {
  auto r = rows.to(torch::kFloat32).contiguous();
  const float* p = r.data_ptr<float>();
  char buf[32];
  for (int64_t i = 0; i < r.size(0); ++i) {
    for (int64_t j = 0; j < r.size(1); ++j) {
      std::snprintf(buf, sizeof buf, "%.7g", p[i * r.size(1) + j]);
      if (j) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

std::ofstream open_for_write(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(where + ": missing or invalid field '" + key + "'");
  }
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(text) + "'");
}

std::vector<ClipRecord> DatasetManifest::records_in(Split split) const {
  std::vector<ClipRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

int DatasetManifest::genre_index(const std::string& genre) const {
  auto it = std::find(genres.begin(), genres.end(), genre);
  return it == genres.end() ? -1 : static_cast<int>(it - genres.begin());
}

// --- Manifest ----------------------------------------------------------------

void check_song_disjoint(const std::vector<ClipRecord>& records) {
  std::set<std::string> train;
  for (const auto& r : records) {
    if (r.split == Split::kTrain) train.insert(r.song_id);
  }
  for (const auto& r : records) {
    if (r.split != Split::kTrain && train.count(r.song_id)) {
      throw DataError("song '" + r.song_id + "' appears in train and " +
                      std::string(to_string(r.split)));
    }
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": not valid JSON (" + e.what() + ")");
  }
  const std::string where = path.string();
  DatasetManifest m;
  const fs::path dir = path.parent_path();
  m.root = dir.filename() == "manifests" ? dir.parent_path() : dir;
  m.sample_rate = field<int>(j, "sample_rate", where);
  m.motion_fps = field<double>(j, "motion_fps", where);
  m.clip_seconds = field<double>(j, "clip_seconds", where);
  m.genres = field<std::vector<std::string>>(j, "genres", where);
  if (m.sample_rate <= 0 || m.motion_fps <= 0 || !(m.clip_seconds > 0)) {
    throw DataError(where + ": sample_rate, motion_fps and clip_seconds must be positive");
  }
  if (!j.contains("records") || !j["records"].is_array()) {
    throw DataError(where + ": missing 'records' array");
  }
  std::set<std::string> ids;
  size_t index = 0;
  for (const auto& jr : j["records"]) {
    const std::string at = where + ": record " + std::to_string(index++);
    ClipRecord r;
    r.clip_id = field<std::string>(jr, "clip_id", at);
    r.song_id = field<std::string>(jr, "song_id", at);
    r.genre = field<std::string>(jr, "genre", at);
    r.split = parse_split(field<std::string>(jr, "split", at));
    r.audio_path = field<std::string>(jr, "audio", at);
    r.motion_path = field<std::string>(jr, "motion", at);
    r.motion_representation =
        parse_motion_representation(field<std::string>(jr, "motion_representation", at));
    if (jr.contains("visual") && !jr["visual"].is_null()) {
      r.visual_path = field<std::string>(jr, "visual", at);
    }
    r.start_seconds = field<double>(jr, "start", at);
    r.end_seconds = field<double>(jr, "end", at);
    if (!ids.insert(r.clip_id).second) throw DataError(at + ": duplicate clip id '" + r.clip_id + "'");
    if (r.start_seconds < 0 || std::abs(r.duration() - m.clip_seconds) > 1e-6) {
      throw DataError(at + " (" + r.clip_id + "): span must be clip_seconds long");
    }
    if (m.genre_index(r.genre) < 0) throw DataError(at + ": unknown genre '" + r.genre + "'");
    for (const std::string* p : {&r.audio_path, &r.motion_path, &r.visual_path}) {
      if (!p->empty() && !fs::exists(m.root / *p)) {
        throw DataError(at + " (" + r.clip_id + "): missing file " + (m.root / *p).string());
      }
    }
    m.records.push_back(std::move(r));
  }
  check_song_disjoint(m.records);
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["sample_rate"] = m.sample_rate;
  j["motion_fps"] = m.motion_fps;
  j["clip_seconds"] = m.clip_seconds;
  j["genres"] = m.genres;
  j["records"] = json::array();
  for (const auto& r : m.records) {
    json jr;
    jr["clip_id"] = r.clip_id;
    jr["song_id"] = r.song_id;
    jr["genre"] = r.genre;
    jr["split"] = std::string(to_string(r.split));
    jr["audio"] = r.audio_path;
    jr["motion"] = r.motion_path;
    jr["motion_representation"] = std::string(to_string(r.motion_representation));
    jr["visual"] = r.visual_path.empty() ? json(nullptr) : json(r.visual_path);
    jr["start"] = r.start_seconds;
    jr["end"] = r.end_seconds;
    j["records"].push_back(jr);
  }
  auto out = open_for_write(path);
  out << j.dump(2) << '\n';
}

// --- Splits ------------------------------------------------------------------

std::vector<ClipRecord> split_by_song(std::vector<ClipRecord> records, const SplitRatios& ratios,
                                      uint64_t seed) {
  const double weights[3] = {ratios.train, ratios.val, ratios.test};
  double sum = 0.0;
  int active = 0;
  for (double w : weights) {
    if (w < 0 || !std::isfinite(w)) throw ConfigError("split ratios must be finite and >= 0");
    sum += w;
    active += w > 0;
  }
  if (sum <= 0) throw ConfigError("split ratios sum to zero");

  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.song_id);
  std::vector<std::string> songs(unique.begin(), unique.end());
  const int64_t n = static_cast<int64_t>(songs.size());
  if (n < 2 || n < active) {
    throw DataError("cannot split " + std::to_string(n) + " song(s) into " +
                    std::to_string(active) + " splits");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(songs.begin(), songs.end(), rng);

  // Largest-remainder allocation with a floor of one song per active split.
  int64_t counts[3];
  double remainders[3];
  int64_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = weights[i] / sum * n;
    counts[i] = weights[i] > 0 ? std::max<int64_t>(1, static_cast<int64_t>(std::floor(exact))) : 0;
    remainders[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (weights[i] > 0 && remainders[i] > remainders[best]) best = i;
    }
    ++counts[best];
    remainders[best] = -1.0;
    if (std::all_of(std::begin(remainders), std::end(remainders), [](double r) { return r < 0; })) {
      for (int i = 0; i < 3; ++i) remainders[i] = weights[i] > 0 ? weights[i] : -1.0;
    }
    ++assigned;
  }
  while (assigned > n) {
    int largest = 0;
    for (int i = 1; i < 3; ++i) {
      if (counts[i] > counts[largest]) largest = i;
    }
    --counts[largest];
    --assigned;
  }
  std::map<std::string, Split> assignment;
  int64_t pos = 0;
  const Split order[3] = {Split::kTrain, Split::kVal, Split::kTest};
  for (int i = 0; i < 3; ++i) {
    for (int64_t c = 0; c < counts[i]; ++c) assignment[songs[pos++]] = order[i];
  }
  return assign_splits(std::move(records), assignment);
}

std::vector<ClipRecord> assign_splits(std::vector<ClipRecord> records,
                                      const std::map<std::string, Split>& song_splits) {
  for (auto& r : records) {
    auto it = song_splits.find(r.song_id);
    if (it == song_splits.end()) throw DataError("song '" + r.song_id + "' has no split assignment");
    r.split = it->second;
  }
  return records;
}

std::vector<ClipRecord> segment_clips(const ClipRecord& source, double clip_seconds,
                                      double stride_seconds) {
  if (!(clip_seconds > 0) || !(stride_seconds > 0)) {
    throw ConfigError("clip and stride lengths must be positive");
  }
  const double duration = source.duration();
  if (duration + 1e-9 < clip_seconds) {
    throw DataError("source '" + source.clip_id + "' is shorter than one clip");
  }
  const int64_t count = static_cast<int64_t>(std::floor((duration - clip_seconds) / stride_seconds + 1e-9)) + 1;
  std::vector<ClipRecord> clips;
  for (int64_t k = 0; k < count; ++k) {
    ClipRecord c = source;
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "_%03lld", static_cast<long long>(k));
    c.clip_id = source.clip_id + suffix;
    c.start_seconds = source.start_seconds + k * stride_seconds;
    c.end_seconds = c.start_seconds + clip_seconds;
    clips.push_back(std::move(c));
  }
  return clips;
}

// --- Motion and visual files -------------------------------------------------

MotionSequence load_motion(const fs::path& path, MotionRepresentation representation,
                           std::optional<double> expected_seconds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read motion file " + path.string());
  std::string line;
  std::getline(in, line);
  const Header h = parse_header(line, path);
  if (h.kind != to_string(representation)) {
    throw DataError(path.string() + ": declared '" + h.kind + "', expected '" +
                    std::string(to_string(representation)) + "'");
  }
  const double fps = header_number(h, "fps", path);
  if (fps <= 0) throw DataError(path.string() + ": fps must be positive");

  torch::Tensor channels;
  if (representation == MotionRepresentation::kKeypoints2d) {
    const double width = header_number(h, "width", path);
    const double height = header_number(h, "height", path);
    if (width <= 0 || height <= 0) throw DataError(path.string() + ": bad frame size");
    if (header_number(h, "joints", path) != kKeypointJoints) {
      throw DataError(path.string() + ": keypoint files must have 17 joints");
    }
    const auto rows = read_rows(in, kKeypointJoints * 3, path);
    channels = torch::zeros({2 * kKeypointJoints, static_cast<int64_t>(rows.size())});
    auto acc = channels.accessor<float, 2>();
    for (size_t t = 0; t < rows.size(); ++t) {
      for (int j = 0; j < kKeypointJoints; ++j) {
        if (rows[t][3 * j + 2] <= 0.0f) continue;
        acc[2 * j][t] = static_cast<float>(rows[t][3 * j] / width);
        acc[2 * j + 1][t] = static_cast<float>(rows[t][3 * j + 1] / height);
      }
    }
  } else {
    const auto rows = read_rows(in, kSmplValues, path);
    channels = torch::empty({kSmplValues, static_cast<int64_t>(rows.size())});
    auto acc = channels.accessor<float, 2>();
    for (size_t t = 0; t < rows.size(); ++t) {
      for (int c = 0; c < kSmplValues; ++c) acc[c][t] = rows[t][c];
    }
  }
  if (expected_seconds) {
    const double seconds = channels.size(1) / fps;
    if (std::abs(seconds - *expected_seconds) > 0.1 * *expected_seconds) {
      throw DataError(path.string() + ": " + std::to_string(channels.size(1)) + " frames at " +
                      std::to_string(fps) + " fps disagree with the expected duration");
    }
  }
  MotionSequence seq;
  seq.channels = resample_frames(channels, fps);
  seq.fps = kMotionFps;
  seq.representation = representation;
  return seq;
}

void save_keypoints(const fs::path& path, const torch::Tensor& frames, double fps, int width,
                    int height) {
  if (frames.dim() != 3 || frames.size(1) != kKeypointJoints || frames.size(2) != 3) {
    throw DataError("keypoint frames must be [T, 17, 3]");
  }
  auto out = open_for_write(path);
  out << "# keypoints2d fps=" << fps << " width=" << width << " height=" << height
      << " joints=" << kKeypointJoints << '\n';
  write_rows(out, frames.reshape({frames.size(0), -1}));
}

void save_smpl(const fs::path& path, const torch::Tensor& frames, double fps) {
  if (frames.dim() != 2 || frames.size(1) != kSmplValues) throw DataError("SMPL frames must be [T, 75]");
  auto out = open_for_write(path);
  out << "# smpl fps=" << fps << '\n';
  write_rows(out, frames);
}

VisualFeatureSequence load_visual_features(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read visual feature file " + path.string());
  std::string line;
  std::getline(in, line);
  const Header h = parse_header(line, path);
  if (h.kind != "visual") throw DataError(path.string() + ": not a visual feature file");
  const double dim = header_number(h, "dim", path);
  if (dim != kVisualFeatureDim) {
    throw DataError(path.string() + ": feature dimension " + std::to_string(static_cast<int64_t>(dim)) +
                    ", expected 1024");
  }
  VisualFeatureSequence seq;
  seq.window_seconds = header_number(h, "window", path);
  if (seq.window_seconds <= 0) throw DataError(path.string() + ": window must be positive");
  const auto rows = read_rows(in, kVisualFeatureDim, path);
  seq.features = torch::empty({kVisualFeatureDim, static_cast<int64_t>(rows.size())});
  auto acc = seq.features.accessor<float, 2>();
  for (size_t t = 0; t < rows.size(); ++t) {
    for (int64_t c = 0; c < kVisualFeatureDim; ++c) acc[c][t] = rows[t][c];
  }
  return seq;
}

void save_visual_features(const fs::path& path, const VisualFeatureSequence& features) {
  if (features.features.dim() != 2 || features.features.size(0) != kVisualFeatureDim) {
    throw DataError("visual features must be [1024, T]");
  }
  auto out = open_for_write(path);
  out << "# visual dim=" << kVisualFeatureDim << " window=" << features.window_seconds << '\n';
  write_rows(out, features.features.t());
}

// --- Clips -------------------------------------------------------------------

SongData load_song(const DatasetManifest& manifest, const ClipRecord& record,
                   const ClipLoadOptions& options) {
  SongData song;
  song.song_id = record.song_id;
  song.genre = record.genre;
  song.genre_index = manifest.genre_index(record.genre);
  const Waveform wave = load_audio(manifest.root / record.audio_path);
  song.audio = torch::from_blob(const_cast<float*>(wave.samples.data()),
                                {static_cast<int64_t>(wave.size())}, torch::kFloat32)
                   .clone();
  song.motion = load_motion(manifest.root / record.motion_path, record.motion_representation,
                            wave.duration_seconds());
  if (options.use_visual) {
    if (record.visual_path.empty()) {
      throw DataError("song '" + record.song_id +
                      "' has no visual features; disable the visual stream to use it");
    }
    song.visual = load_visual_features(manifest.root / record.visual_path);
  }
  return song;
}

ClipExample cut_clip(const SongData& song, double start, double seconds,
                     const std::string& clip_id) {
  ClipExample ex;
  ex.clip_id = clip_id;
  ex.genre = song.genre;
  ex.genre_index = song.genre_index;
  const std::string who = "clip '" + clip_id + "'";
  if (start < 0 || !(seconds > 0)) throw DataError(who + ": invalid time span");

  const int64_t s0 = std::llround(start * kSampleRate);
  const int64_t n = std::llround(seconds * kSampleRate);
  if (s0 + n > song.audio.size(0)) throw DataError(who + " extends past the audio");
  ex.audio = song.audio.narrow(0, s0, n).clone();

  const int64_t f0 = std::llround(start * song.motion.fps);
  const int64_t nf = std::llround(seconds * song.motion.fps);
  if (f0 + nf > song.motion.frames()) throw DataError(who + " extends past the motion track");
  ex.motion = song.motion.channels.narrow(1, f0, nf).clone();

  const double window = song.visual.features.defined() ? song.visual.window_seconds : 0.5;
  const int64_t w0 = static_cast<int64_t>(std::floor(start / window + 1e-9));
  const int64_t nw = static_cast<int64_t>(std::ceil(seconds / window - 1e-9));
  if (!song.visual.features.defined()) {
    ex.visual = torch::zeros({kVisualFeatureDim, nw});
  } else {
    if (w0 + nw > song.visual.windows()) throw DataError(who + " extends past the visual features");
    ex.visual = song.visual.features.narrow(1, w0, nw).clone();
  }
  return ex;
}

ClipExample load_clip(const DatasetManifest& manifest, const ClipRecord& record,
                      const ClipLoadOptions& options) {
  return cut_clip(load_song(manifest, record, options), record.start_seconds, record.duration(),
                  record.clip_id);
}

// --- Toy corpus --------------------------------------------------------------

std::vector<ToyGenre> default_toy_genres(int count) {
  static const std::vector<ToyGenre> kTable = {
      {"genre0", 90, 1800, {220, 330, 440}},  {"genre1", 150, 3200, {392, 587, 784}},
      {"genre2", 120, 2400, {262, 392, 523}}, {"genre3", 180, 4000, {294, 440, 587}},
      {"genre4", 60, 1200, {165, 247, 330}},  {"genre5", 210, 2800, {349, 523, 698}}};
  if (count < 2 || count > static_cast<int>(kTable.size())) {
    throw ConfigError("toy corpus supports 2 to " + std::to_string(kTable.size()) + " genres");
  }
  return {kTable.begin(), kTable.begin() + count};
}

std::vector<double> toy_click_times(const ToyGenre& genre, double seconds) {
  if (!(genre.tempo_bpm > 0)) throw ConfigError("toy tempo must be positive");
  const double period = 60.0 / genre.tempo_bpm;
  std::vector<double> times;
  for (int k = 0;; ++k) {
    const double t = (k + 0.5) * period;
    if (t >= seconds) break;
    times.push_back(t);
  }
  return times;
}

Waveform synth_toy_audio(const ToyGenre& genre, double seconds, uint64_t seed, double noise_level) {
  const auto clicks = toy_click_times(genre, seconds);
  const int64_t n = std::llround(seconds * kSampleRate);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> x(static_cast<size_t>(n), 0.0);
  const double amps[] = {0.15, 0.1, 0.05};
  for (size_t p = 0; p < genre.partials_hz.size(); ++p) {
    const double a = p < 3 ? amps[p] : 0.05;
    const double ph = phase(rng);
    const double w = 2.0 * std::numbers::pi * genre.partials_hz[p] / kSampleRate;
    for (int64_t i = 0; i < n; ++i) x[i] += a * std::sin(w * i + ph);
  }
  const int64_t burst = static_cast<int64_t>(0.06 * kSampleRate);
  for (double c : clicks) {
    const int64_t s = static_cast<int64_t>(c * kSampleRate);
    for (int64_t i = 0; i < burst && s + i < n; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      x[s + i] += 0.5 * std::exp(-t / 0.012) * std::sin(2.0 * std::numbers::pi * genre.click_hz * t);
    }
  }
  Waveform wave;
  wave.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    wave.samples[i] = static_cast<float>(std::clamp(x[i] + noise_level * noise(rng), -1.0, 1.0));
  }
  return wave;
}

namespace {

// [T, 17, 3] pixel keypoints whose vertical displacement peaks at every click.
torch::Tensor synth_toy_keypoints(const ToyGenre& genre, int genre_index, double seconds,
                                  uint64_t seed) {
  const int64_t frames = std::llround(seconds * kMotionFps);
  const double period = 60.0 / genre.tempo_bpm;
  std::mt19937_64 genre_rng(0x5eedULL + static_cast<uint64_t>(genre_index));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> base_x(kKeypointJoints), base_y(kKeypointJoints), amp(kKeypointJoints);
  for (int j = 0; j < kKeypointJoints; ++j) {
    base_x[j] = 540.0 + 200.0 * unit(genre_rng) + 10.0 * unit(rng);
    base_y[j] = 160.0 + 400.0 * j / kKeypointJoints + 10.0 * unit(rng);
    amp[j] = 10.0 + 30.0 * unit(genre_rng);
  }
  auto out = torch::empty({frames, kKeypointJoints, 3});
  auto acc = out.accessor<float, 3>();
  for (int64_t f = 0; f < frames; ++f) {
    const double t = f / kMotionFps;
    const double c = std::cos(2.0 * std::numbers::pi * (t - 0.5 * period) / period);
    for (int j = 0; j < kKeypointJoints; ++j) {
      acc[f][j][0] = static_cast<float>(base_x[j] + 0.3 * amp[j] * c);
      acc[f][j][1] = static_cast<float>(base_y[j] + amp[j] * c);
      acc[f][j][2] = 1.0f;
    }
  }
  return out;
}

VisualFeatureSequence synth_toy_visual(int genre_index, double seconds, uint64_t seed) {
  constexpr int64_t kRank = 4;
  const int64_t windows = static_cast<int64_t>(std::ceil(seconds / 0.5 - 1e-9));
  std::mt19937_64 genre_rng(0xfeedULL + static_cast<uint64_t>(genre_index));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> proj(kVisualFeatureDim * kRank), mean(kRank);
  for (auto& v : proj) v = 0.5 * normal(genre_rng);
  for (auto& v : mean) v = normal(genre_rng);
  VisualFeatureSequence seq;
  seq.features = torch::empty({kVisualFeatureDim, windows});
  auto acc = seq.features.accessor<float, 2>();
  for (int64_t w = 0; w < windows; ++w) {
    double z[kRank];
    for (int64_t r = 0; r < kRank; ++r) z[r] = mean[r] + 0.3 * normal(rng);
    for (int64_t d = 0; d < kVisualFeatureDim; ++d) {
      double v = 0.05 * normal(rng);
      for (int64_t r = 0; r < kRank; ++r) v += proj[d * kRank + r] * z[r];
      acc[d][w] = static_cast<float>(v);
    }
  }
  return seq;
}

}  // namespace

DatasetManifest synth_toy_dataset(const fs::path& root, const ToyDatasetConfig& cfg) {
  const auto genres = default_toy_genres(cfg.genres);
  if (cfg.clips < cfg.genres) throw ConfigError("toy corpus needs at least one clip per genre");
  if (cfg.clips_per_song < 1 || !(cfg.clip_seconds > 0)) {
    throw ConfigError("clips_per_song and clip_seconds must be positive");
  }
  DatasetManifest m;
  m.root = root;
  m.clip_seconds = cfg.clip_seconds;
  for (const auto& g : genres) m.genres.push_back(g.name);

  for (const char* sub : {"audio", "motion", "visual", "manifests"}) fs::create_directories(root / sub);
  const int songs = (cfg.clips + cfg.clips_per_song - 1) / cfg.clips_per_song;
  const double song_seconds = cfg.clips_per_song * cfg.clip_seconds;
  std::vector<std::vector<ClipRecord>> by_genre(genres.size());
  int remaining = cfg.clips;
  for (int s = 0; s < songs; ++s) {
    const int g = s % cfg.genres;
    char name[32];
    std::snprintf(name, sizeof name, "song%04d", s);
    const std::string song = name;
    const uint64_t song_seed = cfg.seed * 1000003ULL + static_cast<uint64_t>(s);

    save_wav(synth_toy_audio(genres[g], song_seconds, song_seed, cfg.noise_level),
             root / "audio" / (song + ".wav"));
    save_keypoints(root / "motion" / (song + ".txt"),
                   synth_toy_keypoints(genres[g], g, song_seconds, song_seed), kMotionFps, 1280, 720);
    save_visual_features(root / "visual" / (song + ".txt"), synth_toy_visual(g, song_seconds, song_seed));

    ClipRecord source;
    source.clip_id = song;
    source.song_id = song;
    source.genre = genres[g].name;
    source.audio_path = "audio/" + song + ".wav";
    source.motion_path = "motion/" + song + ".txt";
    source.visual_path = "visual/" + song + ".txt";
    source.end_seconds = song_seconds;
    for (auto& clip : segment_clips(source, cfg.clip_seconds, cfg.clip_seconds)) {
      if (remaining-- <= 0) break;
      by_genre[g].push_back(std::move(clip));
    }
  }
  // Split each genre separately so every split covers every genre when the
  // song count allows it.
  for (size_t g = 0; g < by_genre.size(); ++g) {
    std::set<std::string> songs_in_genre;
    for (const auto& r : by_genre[g]) songs_in_genre.insert(r.song_id);
    std::vector<ClipRecord> records;
    if (songs_in_genre.size() >= 3) {
      records = split_by_song(by_genre[g], cfg.ratios, cfg.seed + g);
    } else if (songs_in_genre.size() == 2) {
      records = split_by_song(by_genre[g], SplitRatios{0.5, 0.0, 0.5}, cfg.seed + g);
    } else {
      records = by_genre[g];
    }
    for (auto& r : records) m.records.push_back(std::move(r));
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const ClipRecord& a, const ClipRecord& b) { return a.clip_id < b.clip_id; });
  save_manifest(m, root / "manifests" / "toy.json");
  return m;
}

}  // namespace m2m
