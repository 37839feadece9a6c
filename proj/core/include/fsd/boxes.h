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

// Axis-aligned boxes, anchors, delta coding, NMS and target assignment.
// Coordinates are continuous pixels: a box spans [x1, x2) x [y1, y2) and its
// width is x2 - x1.

#ifndef FSD_BOXES_H_
#define FSD_BOXES_H_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace fsd {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double Area() const;
  bool operator==(const Box&) const = default;
};

double IntersectionArea(const Box& a, const Box& b);
// 0 for disjoint or degenerate pairs.
double IoU(const Box& a, const Box& b);
// Intersection over the detection's own area; 0 for a zero-area detection.
double IoBB(const Box& det, const Box& gt);

Box ClipBox(const Box& b, double width, double height);

struct AnchorConfig {
  std::vector<double> ratios = {0.5, 1.0, 2.0};
  std::vector<double> scales = {2.0, 3.0, 4.0, 6.0, 12.0};
  int stride = 8;
  // Anchor base size in pixels; 0 means "same as stride".
  int base = 0;

  int PerLocation() const {
    return static_cast<int>(ratios.size() * scales.size());
  }
  double BaseSize() const { return base > 0 ? base : stride; }
};

// Cell (x, y) has its centre at ((x + 0.5) * stride, (y + 0.5) * stride).
// Order: row-major cells, then ratio-major, then scale.
std::vector<Box> GenerateAnchors(const AnchorConfig& cfg, int64_t feat_h,
                                 int64_t feat_w);

// Centre/size deltas scaled per component: dx = wx * (gx - ax) / aw and
// dw = ww * log(gw / aw), likewise for y and h.
struct BoxCoder {
  std::array<double, 4> weights = {1.0, 1.0, 1.0, 1.0};
  // Caps dw / dh before exponentiation so huge deltas stay finite.
  double max_log_scale = 4.135166556742356;  // log(1000 / 16)

  std::array<double, 4> Encode(const Box& anchor, const Box& target) const;
  Box Decode(const Box& anchor, std::span<const double> deltas) const;
};

// Greedy NMS over boxes in descending score order (ties keep input order).
// Returns kept indices, best first, at most max_keep when max_keep > 0.
std::vector<int> Nms(std::span<const Box> boxes, std::span<const double> scores,
                     double iou_threshold, int max_keep = 0);

struct Assignment {
  // RPN: 1 positive, 0 negative, -1 ignored. Head: class id, 0 background.
  std::vector<int> labels;
  // Index of the best-overlapping GT, or -1 when there are no GTs.
  std::vector<int> matched_gt;
};

// Positive at IoU >= pos or when the anchor is the best match of some GT
// (with non-zero overlap); negative below neg; ignored in between.
Assignment AssignRpn(std::span<const Box> anchors, std::span<const Box> gts,
                     double pos = 0.7, double neg = 0.3);

// Foreground class of the best GT at IoU >= fg, otherwise background.
Assignment AssignHead(std::span<const Box> rois, std::span<const Box> gts,
                      std::span<const int> gt_labels, double fg = 0.5);

}  // namespace fsd

#endif  // FSD_BOXES_H_
