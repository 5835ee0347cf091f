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

#ifndef M2M_COMMON_HPP_
#define M2M_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace m2m {

/// Every waveform inside the pipeline runs at this rate; ingested audio is
/// resampled to it on load.
inline constexpr int kSampleRate = 22050;

/// Dimension of a codebook entry and of every VQ feature column.
inline constexpr int64_t kCodeDim = 64;

/// Base class for all library errors. The CLI maps the subclasses onto
/// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: unknown key, invalid value, inconsistent settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data: missing or malformed file, shape or split violation.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or loss evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The two independently trained abstraction levels.
enum class Level { kHigh, kLow };

/// Audio samples represented by one code: 128 (high) or 32 (low).
int64_t hop_length(Level level);

std::string_view to_string(Level level);

/// Parses "high" or "low"; throws ConfigError otherwise.
Level parse_level(std::string_view text);

/// Number of codes a clip of `n_samples` maps to at `level`.
inline int64_t code_count(int64_t n_samples, Level level) {
  return n_samples / hop_length(level);
}

}  // namespace m2m

#endif  // M2M_COMMON_HPP_
