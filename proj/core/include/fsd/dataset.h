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

#ifndef FSD_DATASET_H_
#define FSD_DATASET_H_

#include <span>
#include <string>
#include <vector>

#include "fsd/boxes.h"
#include "fsd/tensor.h"

namespace fsd {

// One annotated image. `image` is (channels, H, W) with values in [0, 1];
// class ids start at 1 (0 is background).
struct DetectionSample {
  std::string id;
  Tensor image;
  std::vector<Box> gt_boxes;
  std::vector<int> gt_labels;

  int64_t height() const { return image.dim(1); }
  int64_t width() const { return image.dim(2); }
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

// Per-image predictions keyed by the sample id.
struct ImageDetections {
  std::string image_id;
  std::vector<Detection> detections;
};

// Checks the sample invariants: boxes inside the image with x1 < x2 and
// y1 < y2, one label >= 1 per box.
void ValidateSample(const DetectionSample& s);

// Stacks same-sized images into (B, channels, H, W).
Tensor StackImages(std::span<const DetectionSample* const> samples);

}  // namespace fsd

#endif  // FSD_DATASET_H_
