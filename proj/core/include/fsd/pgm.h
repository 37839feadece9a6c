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

// 8-bit binary PGM (P5) images mapped to [0, 1] floats.

#ifndef FSD_PGM_H_
#define FSD_PGM_H_

#include <filesystem>
#include <string>
#include <string_view>

#include "fsd/tensor.h"

namespace fsd {

// image: (H, W) or (1, H, W); values are clamped to [0, 1] and rounded to
// the nearest of 256 levels.
std::string EncodePgm(const Tensor& image);
// Returns (1, H, W). Malformed headers report the byte offset; short pixel
// data reports expected and actual byte counts.
Tensor DecodePgm(std::string_view bytes);

void SavePgm(const std::filesystem::path& path, const Tensor& image);
Tensor LoadPgm(const std::filesystem::path& path);

}  // namespace fsd

#endif  // FSD_PGM_H_
