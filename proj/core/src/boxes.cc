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

#include "fsd/boxes.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fsd {

double Box::Area() const {
  return std::max(0.0, width()) * std::max(0.0, height());
}

double IntersectionArea(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double IoU(const Box& a, const Box& b) {
  const double inter = IntersectionArea(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.Area() + b.Area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double IoBB(const Box& det, const Box& gt) {
  const double area = det.Area();
  if (area <= 0.0) return 0.0;
  return IntersectionArea(det, gt) / area;
}

Box ClipBox(const Box& b, double width, double height) {
  return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
          std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

std::vector<Box> GenerateAnchors(const AnchorConfig& cfg, int64_t feat_h,
                                 int64_t feat_w) {
  if (feat_h <= 0 || feat_w <= 0) {
    throw std::invalid_argument(
        "generate_anchors: feature map must be non-empty");
  }
  const double base = cfg.BaseSize();
  std::vector<std::array<double, 2>> sizes;
  for (double r : cfg.ratios) {
    for (double s : cfg.scales) {
      sizes.push_back({base * s * std::sqrt(1.0 / r), base * s * std::sqrt(r)});
    }
  }
  std::vector<Box> anchors;
  anchors.reserve(feat_h * feat_w * sizes.size());
  for (int64_t y = 0; y < feat_h; ++y) {
    for (int64_t x = 0; x < feat_w; ++x) {
      const double cx = (x + 0.5) * cfg.stride;
      const double cy = (y + 0.5) * cfg.stride;
      for (const auto& [w, h] : sizes) {
        anchors.push_back(
            {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
      }
    }
  }
  return anchors;
}

std::array<double, 4> BoxCoder::Encode(const Box& anchor,
                                       const Box& target) const {
  const double aw = anchor.width(), ah = anchor.height();
  const double ax = anchor.x1 + 0.5 * aw, ay = anchor.y1 + 0.5 * ah;
  const double gw = target.width(), gh = target.height();
  const double gx = target.x1 + 0.5 * gw, gy = target.y1 + 0.5 * gh;
  if (aw <= 0 || ah <= 0 || gw <= 0 || gh <= 0) {
    throw std::invalid_argument("box_coder: encode needs positive-size boxes");
  }
  return {weights[0] * (gx - ax) / aw, weights[1] * (gy - ay) / ah,
          weights[2] * std::log(gw / aw), weights[3] * std::log(gh / ah)};
}

Box BoxCoder::Decode(const Box& anchor, std::span<const double> d) const {
  const double aw = anchor.width(), ah = anchor.height();
  const double ax = anchor.x1 + 0.5 * aw, ay = anchor.y1 + 0.5 * ah;
  const double cx = ax + d[0] / weights[0] * aw;
  const double cy = ay + d[1] / weights[1] * ah;
  const double w = aw * std::exp(std::min(d[2] / weights[2], max_log_scale));
  const double h = ah * std::exp(std::min(d[3] / weights[3], max_log_scale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::vector<int> Nms(std::span<const Box> boxes, std::span<const double> scores,
                     double iou_threshold, int max_keep) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: boxes and scores differ in length");
  }
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> keep;
  std::vector<char> removed(boxes.size(), 0);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const int i = order[oi];
    if (removed[i]) continue;
    keep.push_back(i);
    if (max_keep > 0 && static_cast<int>(keep.size()) >= max_keep) break;
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const int j = order[oj];
      if (!removed[j] && IoU(boxes[i], boxes[j]) > iou_threshold) {
        removed[j] = 1;
      }
    }
  }
  return keep;
}

namespace {

// overlaps[a * G + g]; best GT per anchor.
void BestMatches(std::span<const Box> anchors, std::span<const Box> gts,
                 std::vector<double>& overlaps, std::vector<int>& best_gt,
                 std::vector<double>& best_iou) {
  const size_t n = anchors.size(), g = gts.size();
  overlaps.assign(n * g, 0.0);
  best_gt.assign(n, g ? 0 : -1);
  best_iou.assign(n, 0.0);
  for (size_t a = 0; a < n; ++a) {
    for (size_t k = 0; k < g; ++k) {
      const double v = IoU(anchors[a], gts[k]);
      overlaps[a * g + k] = v;
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(k);
      }
    }
  }
}

}  // namespace

Assignment AssignRpn(std::span<const Box> anchors, std::span<const Box> gts,
                     double pos, double neg) {
  std::vector<double> overlaps, best_iou;
  Assignment out;
  BestMatches(anchors, gts, overlaps, out.matched_gt, best_iou);
  const size_t g = gts.size();
  out.labels.assign(anchors.size(), -1);
  for (size_t a = 0; a < anchors.size(); ++a) {
    if (best_iou[a] >= pos) {
      out.labels[a] = 1;
    } else if (best_iou[a] < neg) {
      out.labels[a] = 0;
    }
  }
  for (size_t k = 0; k < g; ++k) {
    double top = 0.0;
    for (size_t a = 0; a < anchors.size(); ++a) {
      top = std::max(top, overlaps[a * g + k]);
    }
    if (top <= 0.0) continue;
    for (size_t a = 0; a < anchors.size(); ++a) {
      if (overlaps[a * g + k] == top) {
        out.labels[a] = 1;
        out.matched_gt[a] = static_cast<int>(k);
      }
    }
  }
  return out;
}

Assignment AssignHead(std::span<const Box> rois, std::span<const Box> gts,
                      std::span<const int> gt_labels, double fg) {
  if (gts.size() != gt_labels.size()) {
    throw std::invalid_argument(
        "assign_head: boxes and labels differ in length");
  }
  std::vector<double> overlaps, best_iou;
  Assignment out;
  BestMatches(rois, gts, overlaps, out.matched_gt, best_iou);
  out.labels.assign(rois.size(), 0);
  for (size_t r = 0; r < rois.size(); ++r) {
    if (out.matched_gt[r] >= 0 && best_iou[r] >= fg) {
      out.labels[r] = gt_labels[out.matched_gt[r]];
    }
  }
  return out;
}

}  // namespace fsd
