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

#ifndef FSD_CHECKPOINT_H_
#define FSD_CHECKPOINT_H_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fsd/tensor.h"

namespace fsd {

// Binary layout, all integers and floats little-endian:
//   "FSDCKPT1" | u64 count | count x { u32 name_len | name | u32 rank |
//   rank x u64 dim | numel x f64 }
void SaveCheckpoint(const std::filesystem::path& path,
                    const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> LoadCheckpoint(const std::filesystem::path& path);

// Copies checkpoint values into `targets` by name. Throws listing every
// target name absent from the checkpoint, or on a shape mismatch.
void RestoreInto(const std::vector<NamedTensor>& checkpoint,
                 const std::vector<NamedTensor>& targets);

}  // namespace fsd

#endif  // FSD_CHECKPOINT_H_
