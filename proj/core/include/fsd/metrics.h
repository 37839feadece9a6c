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

// Detection metrics: overlap criteria, greedy matching, all-point AP,
// mAP over IoU thresholds 0.50:0.05:0.95, FROC sensitivity at fixed false
// positives per image, and mean recall.

#ifndef FSD_METRICS_H_
#define FSD_METRICS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsd/boxes.h"
#include "fsd/dataset.h"

namespace fsd {

enum class OverlapCriterion { kIoU, kIoBB };

std::string_view CriterionName(OverlapCriterion c);
std::optional<OverlapCriterion> ParseCriterion(std::string_view name);

double Overlap(OverlapCriterion c, const Box& det, const Box& gt);

struct EvalDetection {
  int64_t image = 0;
  Box box;
  int class_id = 1;
  double score = 0.0;
};

struct EvalGroundTruth {
  int64_t image = 0;
  Box box;
  int class_id = 1;
};

struct EvalSet {
  int64_t num_images = 0;
  std::vector<EvalDetection> detections;
  std::vector<EvalGroundTruth> ground_truth;

  // Sorted distinct class ids of the ground truth.
  std::vector<int> GtClasses() const;
};

// Thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> RangeThresholds();
std::vector<double> DefaultFppiPoints();

// Greedy matching in descending score order (stable for ties): each
// detection takes the unmatched same-image, same-class GT of highest overlap
// at or above the threshold. Flags are returned in input order.
std::vector<bool> MatchDetections(std::span<const EvalDetection> dets,
                                  std::span<const EvalGroundTruth> gts,
                                  OverlapCriterion c, double threshold);

// All-point interpolated AP of one class. nullopt when the class has neither
// detections nor GT; 0 when it has detections but no GT.
std::optional<double> AveragePrecision(const EvalSet& set, int class_id,
                                       OverlapCriterion c, double threshold);

// Mean AP over RangeThresholds(), then over the classes present in GT.
double MapRange(const EvalSet& set, OverlapCriterion c);
// Per-class mean over RangeThresholds().
double ClassApRange(const EvalSet& set, int class_id, OverlapCriterion c);

// FROC: at every distinct score cutoff, a GT is found when a kept detection
// of its image and class overlaps it at the threshold, and a kept detection
// that overlaps no same-class GT of its image is a false positive. Each point
// reports the best sensitivity among cutoffs whose FPs per image do not
// exceed it.
std::map<double, double> SensitivityAtFppi(const EvalSet& set,
                                           OverlapCriterion c, double threshold,
                                           std::span<const double> points);

// Mean over RangeThresholds() of matched GT / total GT, using every
// detection with a positive score.
double RecallRange(const EvalSet& set, OverlapCriterion c);

struct MetricsReport {
  OverlapCriterion criterion = OverlapCriterion::kIoU;
  std::map<int, double> per_class_ap;
  double map_range = 0.0;
  std::map<double, double> sensitivity;
  double recall_range = 0.0;
};

MetricsReport PerClassReport(const EvalSet& set, OverlapCriterion c,
                             std::span<const double> fppi_points,
                             double match_threshold = 0.5);

// Aligned table for people.
std::string FormatReportTable(std::span<const MetricsReport> reports,
                              std::span<const std::string> class_names);
// "metric class criterion value" lines.
std::string FormatReportRecords(std::span<const MetricsReport> reports,
                                std::span<const std::string> class_names);

// Prediction dump: one "image_id x1 y1 x2 y2 class score" line per
// detection.
void WritePredictions(const std::filesystem::path& path,
                      std::span<const ImageDetections> predictions);
std::vector<ImageDetections> ReadPredictions(const std::filesystem::path& path);

// Joins samples and predictions by image id; predictions for unknown ids
// are rejected.
EvalSet BuildEvalSet(std::span<const DetectionSample> samples,
                     std::span<const ImageDetections> predictions);

}  // namespace fsd

#endif  // FSD_METRICS_H_
