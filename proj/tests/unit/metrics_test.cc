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

#include "fsd/metrics.h"

#include <gtest/gtest.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "test_util.h"

namespace fsd {
namespace {

EvalDetection Det(int64_t image, Box b, double score, int cls = 1) {
  return {image, b, cls, score};
}
EvalGroundTruth Gt(int64_t image, Box b, int cls = 1) {
  return {image, b, cls};
}

const Box kGt{0, 0, 10, 10};

TEST(OverlapTest, IoUExamples) {
  EXPECT_DOUBLE_EQ(Overlap(OverlapCriterion::kIoU, kGt, kGt), 1.0);
  EXPECT_DOUBLE_EQ(Overlap(OverlapCriterion::kIoU, Box{20, 20, 30, 30}, kGt),
                   0.0);
  EXPECT_NEAR(Overlap(OverlapCriterion::kIoU, Box{5, 5, 15, 15}, kGt),
              25.0 / 175.0, 1e-15);
}

TEST(OverlapTest, IoBBExamples) {
  EXPECT_DOUBLE_EQ(Overlap(OverlapCriterion::kIoBB, Box{1, 1, 4, 9}, kGt), 1.0);
  EXPECT_DOUBLE_EQ(Overlap(OverlapCriterion::kIoBB, Box{5, 5, 15, 15}, kGt),
                   0.25);
  EXPECT_DOUBLE_EQ(Overlap(OverlapCriterion::kIoBB, Box{20, 20, 30, 30}, kGt),
                   0.0);
}

TEST(OverlapTest, CriterionNames) {
  EXPECT_EQ(CriterionName(OverlapCriterion::kIoBB), "iobb");
  EXPECT_EQ(ParseCriterion("iou"), OverlapCriterion::kIoU);
  EXPECT_FALSE(ParseCriterion("giou").has_value());
}

TEST(MatchTest, ExactDetectionIsTruePositive) {
  const std::vector<EvalDetection> d = {Det(0, kGt, 0.9)};
  const std::vector<EvalGroundTruth> g = {Gt(0, kGt)};
  EXPECT_EQ(MatchDetections(d, g, OverlapCriterion::kIoU, 0.5),
            (std::vector<bool>{true}));
}

TEST(MatchTest, SecondDetectionOnSameGtIsFalsePositive) {
  // Listed low score first: flags come back in input order.
  const std::vector<EvalDetection> d = {Det(0, Box{0, 0, 10, 9}, 0.6),
                                        Det(0, kGt, 0.9)};
  const std::vector<EvalGroundTruth> g = {Gt(0, kGt)};
  EXPECT_EQ(MatchDetections(d, g, OverlapCriterion::kIoU, 0.5),
            (std::vector<bool>{false, true}));
}

TEST(MatchTest, IoBBRescuesAWideDetection) {
  // Intersection 450/7, detection area 750/7: IoU 0.45 and IoBB 0.6.
  const Box det{25.0 / 7.0, 0, 25.0 / 7.0 + 75.0 / 7.0, 10};
  ASSERT_NEAR(IoU(det, kGt), 0.45, 1e-12);
  ASSERT_NEAR(IoBB(det, kGt), 0.6, 1e-12);
  const std::vector<EvalDetection> d = {Det(0, det, 0.9)};
  const std::vector<EvalGroundTruth> g = {Gt(0, kGt)};
  EXPECT_EQ(MatchDetections(d, g, OverlapCriterion::kIoU, 0.5),
            (std::vector<bool>{false}));
  EXPECT_EQ(MatchDetections(d, g, OverlapCriterion::kIoBB, 0.5),
            (std::vector<bool>{true}));
}

TEST(MatchTest, ClassAndImageMustAgree) {
  const std::vector<EvalDetection> d = {Det(0, kGt, 0.9, 2), Det(1, kGt, 0.8)};
  const std::vector<EvalGroundTruth> g = {Gt(0, kGt)};
  EXPECT_EQ(MatchDetections(d, g, OverlapCriterion::kIoU, 0.5),
            (std::vector<bool>{false, false}));
}

TEST(AveragePrecisionTest, Examples) {
  EvalSet s;
  s.num_images = 1;
  s.ground_truth = {Gt(0, kGt)};
  s.detections = {Det(0, kGt, 0.9)};
  EXPECT_DOUBLE_EQ(*AveragePrecision(s, 1, OverlapCriterion::kIoU, 0.5), 1.0);

  s.detections = {Det(0, Box{30, 30, 40, 40}, 0.9), Det(0, kGt, 0.8)};
  EXPECT_DOUBLE_EQ(*AveragePrecision(s, 1, OverlapCriterion::kIoU, 0.5), 0.5);

  s.detections.clear();
  EXPECT_DOUBLE_EQ(*AveragePrecision(s, 1, OverlapCriterion::kIoU, 0.5), 0.0);
}

TEST(AveragePrecisionTest, AbsentClassConventions) {
  EvalSet s;
  s.num_images = 1;
  s.ground_truth = {Gt(0, kGt)};
  EXPECT_FALSE(AveragePrecision(s, 2, OverlapCriterion::kIoU, 0.5).has_value());
  s.detections = {Det(0, kGt, 0.5, 2)};
  EXPECT_DOUBLE_EQ(*AveragePrecision(s, 2, OverlapCriterion::kIoU, 0.5), 0.0);
}

TEST(AveragePrecisionTest, EnvelopeUsesLaterHigherPrecision) {
  // TP, FP, TP over 2 GTs: precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1.
  EvalSet s;
  s.num_images = 1;
  s.ground_truth = {Gt(0, kGt), Gt(0, Box{20, 20, 30, 30})};
  s.detections = {Det(0, kGt, 0.9), Det(0, Box{50, 50, 60, 60}, 0.8),
                  Det(0, Box{20, 20, 30, 30}, 0.7)};
  EXPECT_NEAR(*AveragePrecision(s, 1, OverlapCriterion::kIoU, 0.5),
              0.5 * 1.0 + 0.5 * (2.0 / 3.0), 1e-15);
}

TEST(MapRangeTest, Examples) {
  EvalSet s;
  s.num_images = 2;
  s.ground_truth = {Gt(0, kGt), Gt(1, Box{3, 3, 9, 12}, 2)};
  s.detections = {Det(0, kGt, 0.9), Det(1, Box{3, 3, 9, 12}, 0.4, 2)};
  EXPECT_DOUBLE_EQ(MapRange(s, OverlapCriterion::kIoU), 1.0);

  s.ground_truth = {Gt(0, kGt)};
  s.detections = {Det(0, Box{0, 0, 10, 6}, 0.9)};
  EXPECT_DOUBLE_EQ(MapRange(s, OverlapCriterion::kIoU), 0.3);
  EXPECT_DOUBLE_EQ(RecallRange(s, OverlapCriterion::kIoU), 0.3);
  // The detection sits inside the GT: IoBB is 1 at every threshold.
  EXPECT_DOUBLE_EQ(MapRange(s, OverlapCriterion::kIoBB), 1.0);

  s.detections.clear();
  EXPECT_DOUBLE_EQ(MapRange(s, OverlapCriterion::kIoU), 0.0);
  EXPECT_DOUBLE_EQ(RecallRange(s, OverlapCriterion::kIoU), 0.0);
}

TEST(MapRangeTest, ThresholdsAndFppiDefaults) {
  const auto t = RangeThresholds();
  ASSERT_EQ(t.size(), 10u);
  EXPECT_DOUBLE_EQ(t.front(), 0.5);
  EXPECT_NEAR(t.back(), 0.95, 1e-15);
  EXPECT_EQ(DefaultFppiPoints(), (std::vector<double>{0.5, 1, 2, 4, 8, 16}));
}

TEST(RecallRangeTest, IgnoresNonPositiveScores) {
  EvalSet s;
  s.num_images = 1;
  s.ground_truth = {Gt(0, kGt)};
  s.detections = {Det(0, kGt, 0.0)};
  EXPECT_DOUBLE_EQ(RecallRange(s, OverlapCriterion::kIoU), 0.0);
  s.detections[0].score = 1e-6;
  EXPECT_DOUBLE_EQ(RecallRange(s, OverlapCriterion::kIoU), 1.0);
}

TEST(SensitivityTest, ThreeCutoffExample) {
  EvalSet s;
  s.num_images = 2;
  s.ground_truth = {Gt(0, kGt), Gt(1, kGt)};
  s.detections = {Det(0, kGt, 0.9), Det(0, Box{40, 40, 50, 50}, 0.8),
                  Det(1, kGt, 0.7)};
  const std::vector<double> points = {0.25, 0.5, 1.0};
  const auto sens = SensitivityAtFppi(s, OverlapCriterion::kIoU, 0.5, points);
  EXPECT_DOUBLE_EQ(sens.at(0.25), 0.5);
  EXPECT_DOUBLE_EQ(sens.at(0.5), 1.0);
  EXPECT_DOUBLE_EQ(sens.at(1.0), 1.0);
}

TEST(SensitivityTest, NoFalsePositivesIsFlat) {
  EvalSet s;
  s.num_images = 3;
  s.ground_truth = {Gt(0, kGt), Gt(1, kGt), Gt(2, kGt)};
  s.detections = {Det(0, kGt, 0.9), Det(2, kGt, 0.3)};
  const auto pts = DefaultFppiPoints();
  const auto sens = SensitivityAtFppi(s, OverlapCriterion::kIoU, 0.5, pts);
  for (const auto& [p, v] : sens) EXPECT_DOUBLE_EQ(v, 2.0 / 3.0) << p;
}

TEST(SensitivityTest, NoHitsIsZero) {
  EvalSet s;
  s.num_images = 1;
  s.ground_truth = {Gt(0, kGt)};
  s.detections = {Det(0, Box{40, 40, 50, 50}, 0.9)};
  const auto pts = DefaultFppiPoints();
  for (const auto& [p, v] :
       SensitivityAtFppi(s, OverlapCriterion::kIoU, 0.5, pts)) {
    EXPECT_EQ(v, 0.0) << p;
  }
  s.num_images = 0;
  EXPECT_THROW(SensitivityAtFppi(s, OverlapCriterion::kIoU, 0.5, pts),
               std::invalid_argument);
}

TEST(ReportTest, SingleClassApEqualsMap) {
  EvalSet s;
  s.num_images = 1;
  s.ground_truth = {Gt(0, kGt)};
  s.detections = {Det(0, Box{0, 0, 10, 8}, 0.7)};
  const auto pts = DefaultFppiPoints();
  const MetricsReport r = PerClassReport(s, OverlapCriterion::kIoU, pts);
  ASSERT_EQ(r.per_class_ap.size(), 1u);
  EXPECT_DOUBLE_EQ(r.per_class_ap.at(1), r.map_range);
  EXPECT_EQ(r.sensitivity.size(), 6u);
}

TEST(ReportTest, EmptyInputGivesZeros) {
  const EvalSet s;
  const auto pts = DefaultFppiPoints();
  const MetricsReport r = PerClassReport(s, OverlapCriterion::kIoBB, pts);
  EXPECT_TRUE(r.per_class_ap.empty());
  EXPECT_EQ(r.map_range, 0.0);
  EXPECT_EQ(r.recall_range, 0.0);
  for (const auto& [p, v] : r.sensitivity) EXPECT_EQ(v, 0.0);
}

TEST(ReportTest, RecordsAndTable) {
  EvalSet s;
  s.num_images = 1;
  s.ground_truth = {Gt(0, kGt)};
  s.detections = {Det(0, kGt, 0.7)};
  const std::vector<double> pts = {1.0};
  const std::vector<MetricsReport> reports = {
      PerClassReport(s, OverlapCriterion::kIoU, pts),
      PerClassReport(s, OverlapCriterion::kIoBB, pts)};
  const std::vector<std::string> names = {"lesion"};
  EXPECT_EQ(FormatReportRecords(reports, names),
            "ap_range lesion iou 1.000000\n"
            "map_range all iou 1.000000\n"
            "sensitivity@1 all iou 1.000000\n"
            "recall_range all iou 1.000000\n"
            "ap_range lesion iobb 1.000000\n"
            "map_range all iobb 1.000000\n"
            "sensitivity@1 all iobb 1.000000\n"
            "recall_range all iobb 1.000000\n");
  const std::string table = FormatReportTable(reports, names);
  EXPECT_NE(table.find("criterion: iobb"), std::string::npos);
  EXPECT_NE(table.find("AP@[.5:.95] lesion"), std::string::npos);
  EXPECT_NE(table.find("sensitivity@1FPPI"), std::string::npos);
}

TEST(PredictionsTest, RoundTripAndJoin) {
  testing::TempDir dir("preds");
  const std::vector<ImageDetections> preds = {
      {"val/0000.pgm",
       {{{1.5, 2.25, 10, 12}, 1, 0.875}, {{0, 0, 4, 4}, 2, 0.5}}},
      {"val/0001.pgm", {{{3, 3, 9, 9}, 1, 0.25}}}};
  WritePredictions(dir.path() / "p.txt", preds);
  EXPECT_EQ(testing::ReadFile(dir.path() / "p.txt"),
            "val/0000.pgm 1.5000 2.2500 10.0000 12.0000 1 0.875000\n"
            "val/0000.pgm 0.0000 0.0000 4.0000 4.0000 2 0.500000\n"
            "val/0001.pgm 3.0000 3.0000 9.0000 9.0000 1 0.250000\n");
  const auto back = ReadPredictions(dir.path() / "p.txt");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].detections.size(), 2u);
  EXPECT_EQ(back[1].detections[0].box, (Box{3, 3, 9, 9}));

  std::vector<DetectionSample> samples(2);
  samples[0].id = "val/0000.pgm";
  samples[0].gt_boxes = {kGt};
  samples[0].gt_labels = {1};
  samples[1].id = "val/0001.pgm";
  const EvalSet set = BuildEvalSet(samples, back);
  EXPECT_EQ(set.num_images, 2);
  EXPECT_EQ(set.detections.size(), 3u);
  EXPECT_EQ(set.detections[2].image, 1);
  EXPECT_EQ(set.ground_truth.size(), 1u);

  const std::vector<ImageDetections> stray = {{"val/9999.pgm", {}}};
  EXPECT_THROW(BuildEvalSet(samples, stray), std::invalid_argument);
}

TEST(PredictionsTest, MalformedLineNamesTheLine) {
  testing::TempDir dir("preds_bad");
  {
    std::ofstream out(dir.path() / "p.txt");
    out << "a 1 2 3 4 1 0.5\nb 1 2 three 4 1 0.5\n";
  }
  try {
    ReadPredictions(dir.path() / "p.txt");
    FAIL() << "expected a failure";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace fsd
