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

#include "m2m/archive.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "m2m/common.hpp"

namespace m2m {
namespace {

constexpr char kMagic[8] = {'M', '2', 'M', 'A', 'R', 'C', 'H', '1'};
constexpr size_t kDigestSize = 32;

uint8_t dtype_code(torch::ScalarType type) {
  switch (type) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kInt32: return 3;
    case torch::kUInt8: return 4;
    case torch::kBool: return 5;
    default:
      throw DataError(std::string("archive: unsupported dtype ") + c10::toString(type));
  }
}

torch::ScalarType dtype_from_code(uint8_t code) {
  switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kInt32;
    case 4: return torch::kUInt8;
    case 5: return torch::kBool;
    default: throw DataError("archive: unknown dtype code " + std::to_string(code));
  }
}

class Writer {
 public:
  void bytes(const void* p, size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void scalar(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));  // host is little-endian (x86-64, aarch64)
    bytes(b, sizeof(T));
  }
  void string32(const std::string& s) {
    scalar<uint32_t>(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, size_t size) : data_(data), size_(size) {}
  void need(size_t n) const {
    if (pos_ + n > size_) throw DataError("archive: truncated");
  }
  template <typename T>
  T scalar() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string string(size_t n) {
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  const char* take(size_t n) {
    need(n);
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  size_t position() const { return pos_; }

 private:
  const char* data_;
  size_t size_;
  size_t pos_ = 0;
};

}  // namespace

std::string sha256_hex(const void* data, size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

void ArrayArchive::put(const std::string& name, const torch::Tensor& tensor) {
  dtype_code(tensor.scalar_type());
  arrays_[name] = tensor.detach().to(torch::kCPU).contiguous().clone();
}

void ArrayArchive::put_text(const std::string& key, std::string value) {
  text_[key] = std::move(value);
}

const torch::Tensor& ArrayArchive::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw DataError("archive: missing array '" + name + "'");
  return it->second;
}

const std::string& ArrayArchive::text(const std::string& key) const {
  auto it = text_.find(key);
  if (it == text_.end()) throw DataError("archive: missing text entry '" + key + "'");
  return it->second;
}

std::vector<char> ArrayArchive::serialize() const {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.scalar<uint64_t>(text_.size());
  for (const auto& [key, value] : text_) {
    w.string32(key);
    w.scalar<uint64_t>(value.size());
    w.bytes(value.data(), value.size());
  }
  w.scalar<uint64_t>(arrays_.size());
  for (const auto& [name, tensor] : arrays_) {
    w.string32(name);
    w.scalar<uint8_t>(dtype_code(tensor.scalar_type()));
    w.scalar<uint32_t>(static_cast<uint32_t>(tensor.dim()));
    for (int64_t d : tensor.sizes()) w.scalar<int64_t>(d);
    const size_t n_bytes = tensor.numel() * tensor.element_size();
    w.scalar<uint64_t>(n_bytes);
    w.bytes(tensor.data_ptr(), n_bytes);
  }
  auto& buf = w.buffer();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(buf.data(), buf.size(), digest, &len, EVP_sha256(), nullptr);
  buf.insert(buf.end(), reinterpret_cast<char*>(digest), reinterpret_cast<char*>(digest) + len);
  return std::move(buf);
}

ArrayArchive ArrayArchive::deserialize(const std::vector<char>& bytes) {
  if (bytes.size() < sizeof kMagic + kDigestSize ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("archive: bad magic or truncated file");
  }
  const size_t body = bytes.size() - kDigestSize;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), body, digest, &len, EVP_sha256(), nullptr);
  if (len != kDigestSize || std::memcmp(digest, bytes.data() + body, kDigestSize) != 0) {
    throw DataError("archive: content hash mismatch (corrupt or truncated file)");
  }

  ArrayArchive archive;
  Reader r(bytes.data(), body);
  r.take(sizeof kMagic);
  const auto n_text = r.scalar<uint64_t>();
  for (uint64_t i = 0; i < n_text; ++i) {
    std::string key = r.string(r.scalar<uint32_t>());
    std::string value = r.string(r.scalar<uint64_t>());
    archive.text_.emplace(std::move(key), std::move(value));
  }
  const auto n_arrays = r.scalar<uint64_t>();
  for (uint64_t i = 0; i < n_arrays; ++i) {
    std::string name = r.string(r.scalar<uint32_t>());
    const auto dtype = dtype_from_code(r.scalar<uint8_t>());
    const auto ndim = r.scalar<uint32_t>();
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = r.scalar<int64_t>();
    const auto n_bytes = r.scalar<uint64_t>();
    const char* data = r.take(n_bytes);
    auto tensor = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (static_cast<uint64_t>(tensor.numel() * tensor.element_size()) != n_bytes) {
      throw DataError("archive: size mismatch for array '" + name + "'");
    }
    std::memcpy(tensor.data_ptr(), data, n_bytes);
    archive.arrays_.emplace(std::move(name), std::move(tensor));
  }
  if (r.position() != body) throw DataError("archive: trailing bytes before hash");
  return archive;
}

void ArrayArchive::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write archive " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing archive " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move archive into place at " + path.string() + ": " + ec.message());
}

ArrayArchive ArrayArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open archive " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void put_module(ArrayArchive& archive, const std::string& prefix,
                const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    archive.put(prefix + item.key(), item.value());
  }
  for (const auto& item : module.named_buffers(/*recurse=*/true)) {
    archive.put(prefix + item.key(), item.value());
  }
}

void load_module(const ArrayArchive& archive, const std::string& prefix,
                 torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto copy = [&](const std::string& key, torch::Tensor& target) {
    const auto& source = archive.get(prefix + key);
    if (source.sizes() != target.sizes()) {
      throw DataError("archive: shape mismatch for '" + prefix + key + "'");
    }
    target.copy_(source);
  };
  for (auto& item : module.named_parameters(/*recurse=*/true)) copy(item.key(), item.value());
  for (auto& item : module.named_buffers(/*recurse=*/true)) copy(item.key(), item.value());
}

}  // namespace m2m
