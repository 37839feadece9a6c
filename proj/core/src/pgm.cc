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

#include "fsd/pgm.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fsd {
namespace {

[[noreturn]] void HeaderError(size_t offset, const std::string& what) {
  throw std::runtime_error("pgm: malformed header at byte " +
                           std::to_string(offset) + ": " + what);
}

void SkipSpaceAndComments(std::string_view b, size_t& pos) {
  while (pos < b.size()) {
    if (std::isspace(static_cast<unsigned char>(b[pos]))) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

int64_t ReadHeaderInt(std::string_view b, size_t& pos, const char* what) {
  SkipSpaceAndComments(b, pos);
  const size_t start = pos;
  int64_t v = 0;
  while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
    v = v * 10 + (b[pos] - '0');
    if (v > (int64_t{1} << 30))
      HeaderError(start, std::string(what) + " too large");
    ++pos;
  }
  if (pos == start) HeaderError(start, std::string("expected ") + what);
  return v;
}

}  // namespace

std::string EncodePgm(const Tensor& image) {
  int64_t h = 0, w = 0;
  if (image.ndim() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.ndim() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else {
    throw std::invalid_argument("pgm: expected (H, W) or (1, H, W), got " +
                                ShapeToString(image.shape()));
  }
  std::ostringstream os;
  os << "P5\n" << w << " " << h << "\n255\n";
  std::string out = os.str();
  out.reserve(out.size() + h * w);
  for (double v : image.data()) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(
        static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

Tensor DecodePgm(std::string_view b) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') {
    HeaderError(0, "missing P5 magic");
  }
  size_t pos = 2;
  const int64_t w = ReadHeaderInt(b, pos, "width");
  const int64_t h = ReadHeaderInt(b, pos, "height");
  const size_t maxval_at = pos;
  const int64_t maxval = ReadHeaderInt(b, pos, "maxval");
  if (w <= 0 || h <= 0) HeaderError(maxval_at, "non-positive size");
  if (maxval != 255) HeaderError(maxval_at, "maxval must be 255");
  if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos]))) {
    HeaderError(pos, "expected a single whitespace after maxval");
  }
  ++pos;
  const size_t expected = static_cast<size_t>(w * h);
  const size_t actual = b.size() - pos;
  if (actual < expected) {
    throw std::runtime_error("pgm: truncated pixel data: expected " +
                             std::to_string(expected) + " bytes, got " +
                             std::to_string(actual));
  }
  std::vector<double> data(expected);
  for (size_t i = 0; i < expected; ++i) {
    data[i] = static_cast<unsigned char>(b[pos + i]) / 255.0;
  }
  return Tensor({1, h, w}, std::move(data));
}

void SavePgm(const std::filesystem::path& path, const Tensor& image) {
  const std::string bytes = EncodePgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Tensor LoadPgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return DecodePgm(os.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace fsd
