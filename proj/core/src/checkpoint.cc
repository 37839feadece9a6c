// Copyright 2026 The FSD-NAS Authors.
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

#include "fsd/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace fsd {
namespace {

constexpr char kMagic[8] = {'F', 'S', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void PutLe(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T GetLe(std::istream& is, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path,
                    const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  PutLe<uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    PutLe<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    PutLe<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) PutLe<uint64_t>(os, static_cast<uint64_t>(d));
    for (double v : t.data()) PutLe<double>(os, v);
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<NamedTensor> LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
  }
  const auto count = GetLe<uint64_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint64_t k = 0; k < count; ++k) {
    const auto name_len = GetLe<uint32_t>(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw std::runtime_error("checkpoint " + path.string() + ": truncated");
    }
    const auto rank = GetLe<uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int64_t>(GetLe<uint64_t>(is, path));
    std::vector<double> data(static_cast<size_t>(NumElements(shape)));
    for (double& v : data) v = GetLe<double>(is, path);
    out.emplace_back(std::move(name),
                     Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

void RestoreInto(const std::vector<NamedTensor>& checkpoint,
                 const std::vector<NamedTensor>& targets) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : checkpoint) by_name[name] = &t;
  std::string missing;
  for (const auto& [name, t] : targets) {
    if (!by_name.count(name)) missing += (missing.empty() ? "" : ", ") + name;
  }
  if (!missing.empty()) {
    throw std::runtime_error("checkpoint is missing tensors: " + missing);
  }
  for (const auto& [name, t] : targets) {
    const Tensor& src = *by_name.at(name);
    if (src.shape() != t.shape()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                               ShapeToString(src.shape()) + ", expected " +
                               ShapeToString(t.shape()));
    }
    Tensor dst = t;
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
}

}  // namespace fsd
