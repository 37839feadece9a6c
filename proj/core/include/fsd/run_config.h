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

// Flat "key = value" run configuration covering data generation, the
// detector, search, training and evaluation.

#ifndef FSD_RUN_CONFIG_H_
#define FSD_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fsd/detector.h"
#include "fsd/search.h"
#include "fsd/synthdata.h"

namespace fsd {

struct EvalConfig {
  std::vector<double> fppi_points = {0.5, 1, 2, 4, 8, 16};
  double match_threshold = 0.5;
};

struct RunConfig {
  RunConfig() { SetSeed(0); }

  uint64_t seed = 0;
  SyntheticConfig data;
  DetectorConfig model;
  SearchConfig search;
  // Epochs of full training given to the derived backbone (FC head) before
  // it is frozen for the head search.
  int bone_finetune_epochs = 1;
  TrainConfig train;
  EvalConfig eval;

  // Pushes the master seed into every component.
  void SetSeed(uint64_t s);
  void Validate() const;
};

struct ConfigKeyInfo {
  std::string key;
  std::string default_value;
  std::string doc;
};

// Every accepted key with its default and a one-line description.
std::vector<ConfigKeyInfo> ConfigKeys();

// Missing keys keep their defaults; "#" starts a comment. Unknown keys and
// unparsable values throw std::invalid_argument naming the line.
RunConfig ParseConfig(std::string_view text);
RunConfig LoadConfig(const std::filesystem::path& path);

// All keys with their current values, parseable by ParseConfig.
std::string FormatConfig(const RunConfig& cfg);

}  // namespace fsd

#endif  // FSD_RUN_CONFIG_H_
