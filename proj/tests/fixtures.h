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

// Small detector and dataset settings that keep model-level tests fast.

#ifndef FSD_TESTS_FIXTURES_H_
#define FSD_TESTS_FIXTURES_H_

#include <vector>

#include "fsd/detector.h"
#include "fsd/search.h"
#include "fsd/synthdata.h"

namespace fsd::testing {

inline SyntheticConfig TinyData(int num_train = 8, int num_classes = 1) {
  SyntheticConfig c;
  c.image_size = 32;
  c.num_train = num_train;
  c.num_val = 4;
  c.num_classes = num_classes;
  c.lesions_min = 1;
  c.lesions_max = 2;
  c.radius_min = 3.0;
  c.radius_max = 6.0;
  c.seed = 5;
  return c;
}

inline DetectorConfig TinyDetector(int num_classes = 1) {
  DetectorConfig c;
  c.channels = 4;
  c.num_stages = 1;
  c.cells_per_stage = 1;
  c.bone_nodes = 2;
  c.head_nodes = 2;
  c.head_cells = 1;
  c.num_classes = num_classes;
  c.fc_dim = 16;
  c.roi_size = 4;
  c.anchor.stride = 4;
  c.anchor.ratios = {1.0};
  c.anchor.scales = {2.0, 3.0};
  c.rpn_batch_per_image = 16;
  c.rpn_pre_nms_train = 64;
  c.rpn_post_nms_train = 8;
  c.rpn_pre_nms_test = 64;
  c.rois_per_image = 8;
  c.max_detections = 10;
  return c;
}

inline SearchConfig TinySearch(int epochs = 2) {
  SearchConfig c;
  c.epochs = epochs;
  c.batch_size = 2;
  c.seed = 3;
  return c;
}

}  // namespace fsd::testing

#endif  // FSD_TESTS_FIXTURES_H_
