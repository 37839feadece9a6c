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

#include "fsd/dataset.h"

#include <algorithm>
#include <stdexcept>

namespace fsd {

void ValidateSample(const DetectionSample& s) {
  if (s.image.ndim() != 3) {
    throw std::invalid_argument("sample '" + s.id +
                                "': image must be (C, H, W)");
  }
  if (s.gt_boxes.size() != s.gt_labels.size()) {
    throw std::invalid_argument("sample '" + s.id +
                                "': box and label counts differ");
  }
  const double w = static_cast<double>(s.width());
  const double h = static_cast<double>(s.height());
  for (size_t i = 0; i < s.gt_boxes.size(); ++i) {
    const Box& b = s.gt_boxes[i];
    if (!(0 <= b.x1 && b.x1 < b.x2 && b.x2 <= w && 0 <= b.y1 && b.y1 < b.y2 &&
          b.y2 <= h)) {
      throw std::invalid_argument("sample '" + s.id + "': box " +
                                  std::to_string(i) + " is outside the image");
    }
    if (s.gt_labels[i] < 1) {
      throw std::invalid_argument("sample '" + s.id + "': label " +
                                  std::to_string(i) + " must be >= 1");
    }
  }
}

Tensor StackImages(std::span<const DetectionSample* const> samples) {
  if (samples.empty()) throw std::invalid_argument("stack_images: empty batch");
  const Shape& first = samples[0]->image.shape();
  std::vector<double> data;
  data.reserve(samples.size() * NumElements(first));
  for (const DetectionSample* s : samples) {
    if (s->image.shape() != first) {
      throw std::invalid_argument("stack_images: image " + s->id +
                                  " has shape " +
                                  ShapeToString(s->image.shape()) +
                                  ", expected " + ShapeToString(first));
    }
    const auto v = s->image.data();
    data.insert(data.end(), v.begin(), v.end());
  }
  Shape shape = {static_cast<int64_t>(samples.size())};
  shape.insert(shape.end(), first.begin(), first.end());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace fsd
