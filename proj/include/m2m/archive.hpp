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

// Self-describing archive of named tensors plus string metadata.
//
// Layout (all integers little-endian):
//   "M2MARCH1"                      magic, 8 bytes
//   u64 n_text, then n_text x { u32 key_len, key, u64 value_len, value }
//   u64 n_arrays, then n_arrays x { u32 name_len, name, u8 dtype,
//                                   u32 ndim, i64 dims[ndim],
//                                   u64 n_bytes, raw bytes }
//   32-byte SHA-256 of everything above
//
// Entries are written in name order, so equal contents give equal bytes.

#ifndef M2M_ARCHIVE_HPP_
#define M2M_ARCHIVE_HPP_

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace m2m {

class ArrayArchive {
 public:
  /// Stores a contiguous CPU copy. Supported dtypes: float32, float64,
  /// int64, int32, uint8, bool.
  void put(const std::string& name, const torch::Tensor& tensor);
  void put_text(const std::string& key, std::string value);

  bool contains(const std::string& name) const { return arrays_.count(name) > 0; }
  bool contains_text(const std::string& key) const { return text_.count(key) > 0; }

  /// Throws DataError when absent.
  const torch::Tensor& get(const std::string& name) const;
  const std::string& text(const std::string& key) const;

  const std::map<std::string, torch::Tensor>& arrays() const { return arrays_; }
  const std::map<std::string, std::string>& texts() const { return text_; }

  std::vector<char> serialize() const;
  /// Throws DataError on a bad magic, truncation or hash mismatch.
  static ArrayArchive deserialize(const std::vector<char>& bytes);

  /// Writes to a temporary sibling and renames over `path`.
  void save(const std::filesystem::path& path) const;
  static ArrayArchive load(const std::filesystem::path& path);

 private:
  std::map<std::string, torch::Tensor> arrays_;
  std::map<std::string, std::string> text_;
};

/// Lowercase hex SHA-256 of a byte buffer.
std::string sha256_hex(const void* data, size_t size);

/// Adds every parameter and buffer of `module` under `prefix`.
void put_module(ArrayArchive& archive, const std::string& prefix,
                const torch::nn::Module& module);

/// Copies archived values into the parameters and buffers of `module`.
/// Throws DataError on a missing entry or shape mismatch.
void load_module(const ArrayArchive& archive, const std::string& prefix,
                 torch::nn::Module& module);

}  // namespace m2m

#endif  // M2M_ARCHIVE_HPP_
