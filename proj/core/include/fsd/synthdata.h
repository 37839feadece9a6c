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

// Deterministic synthetic lesion-like datasets and the text manifest that
// indexes them.

#ifndef FSD_SYNTHDATA_H_
#define FSD_SYNTHDATA_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fsd/boxes.h"
#include "fsd/dataset.h"

namespace fsd {

enum class LesionStyle {
  kBlob,  // filled soft ellipse
  kRing,  // hollow soft annulus: recognizing it needs a wide receptive field
};

std::string_view StyleName(LesionStyle s);
std::optional<LesionStyle> ParseStyle(std::string_view name);

struct SyntheticConfig {
  int image_size = 96;
  int num_train = 64;
  int num_val = 32;
  int num_classes = 1;
  int lesions_min = 1;
  int lesions_max = 3;
  double radius_min = 4.0;
  double radius_max = 10.0;
  double noise_sigma = 0.05;
  LesionStyle style = LesionStyle::kBlob;
  // All lesions of an image share one class.
  bool cooccur = false;
  uint64_t seed = 0;

  void Validate() const;
  std::vector<std::string> ClassNames() const;
};

enum class Split { kTrain, kVal };

// Image `index` of a split depends only on (seed, split, index).
DetectionSample GenerateImage(const SyntheticConfig& cfg, Split split,
                              int index);
// All images of one split, quantized exactly as they are stored on disk.
std::vector<DetectionSample> GenerateSplit(const SyntheticConfig& cfg,
                                           Split split);

struct ManifestRecord {
  std::string image_path;
  Box box;
  int class_id = 1;
};

struct DatasetManifest {
  int version = 1;
  std::vector<std::string> class_names;
  std::vector<ManifestRecord> records;
};

std::string FormatManifest(const DatasetManifest& m);
DatasetManifest ParseManifest(std::string_view text);
void SaveManifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest LoadManifest(const std::filesystem::path& path);

struct GeneratedDataset {
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
  DatasetManifest train;
  DatasetManifest val;
};

// Writes <out>/train/*.pgm, <out>/val/*.pgm, <out>/train.manifest and
// <out>/val.manifest. Image paths are relative to the manifest directory.
GeneratedDataset GenerateDataset(const SyntheticConfig& cfg,
                                 const std::filesystem::path& out_dir);

// Loads every image of a manifest; the sample id is the manifest path of
// the image. Images keep the order of their first record.
std::vector<DetectionSample> LoadDataset(const std::filesystem::path& manifest);

}  // namespace fsd

#endif  // FSD_SYNTHDATA_H_
