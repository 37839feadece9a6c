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

// Randomized checks of the detection metrics against brute-force oracles
// and under transformations that must not change them.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fsd/metrics.h"
#include "fsd/rng.h"
#include "metric_oracles.h"

namespace fsd {
namespace {

using testing::BruteForceAp;
using testing::BruteForceFroc;
using testing::RandomSet;

TEST(OverlapProperty, IoBBNeverBelowIoU) {
  // Quarter-pixel coordinates keep every area, intersection and union exact
  // in binary floating point, so only the final divisions round.
  SplitMix64 rng(2024);
  auto quarter = [&](int64_t lo, int64_t hi) {
    return 0.25 * static_cast<double>(rng.UniformInt(lo, hi));
  };
  int nested = 0;
  for (int i = 0; i < 10000; ++i) {
    const double dx = quarter(0, 200), dy = quarter(0, 200);
    const Box d{dx, dy, dx + quarter(1, 120), dy + quarter(1, 120)};
    const double gx = quarter(0, 200), gy = quarter(0, 200);
    const Box g{gx, gy, gx + quarter(1, 120), gy + quarter(1, 120)};
    const double iobb = Overlap(OverlapCriterion::kIoBB, d, g);
    const double iou = Overlap(OverlapCriterion::kIoU, d, g);
    EXPECT_GE(iobb, iou) << i;
    if (g.x1 >= d.x1 && g.y1 >= d.y1 && g.x2 <= d.x2 && g.y2 <= d.y2) {
      ++nested;
      EXPECT_EQ(iobb, iou) << i;
    }
  }
  EXPECT_GT(nested, 0);
}

TEST(AveragePrecisionProperty, MatchesBruteForceOnSmallInstances) {
  int nontrivial = 0;
  for (uint64_t seed = 1; seed <= 1500; ++seed) {
    const EvalSet set = RandomSet(seed, 10, 5, 1 + seed % 3, 1 + seed % 2);
    for (OverlapCriterion c :
         {OverlapCriterion::kIoU, OverlapCriterion::kIoBB}) {
      for (double t : {0.3, 0.5, 0.75}) {
        for (int cls : {1, 2}) {
          const double expected = BruteForceAp(set, cls, c, t);
          const double got = AveragePrecision(set, cls, c, t).value_or(0.0);
          ASSERT_NEAR(got, expected, 1e-12)
              << "seed " << seed << " class " << cls << " t " << t;
          if (expected > 0.0 && expected < 1.0) ++nontrivial;
        }
      }
    }
  }
  EXPECT_GT(nontrivial, 1000);
}

TEST(SensitivityProperty, MatchesBruteForceAndIsMonotone) {
  const std::vector<double> points = {0.125, 0.25, 0.5, 1, 2, 4, 8, 16};
  for (uint64_t seed = 1; seed <= 500; ++seed) {
    const EvalSet set = RandomSet(seed, 12, 6, 1 + seed % 4, 1 + seed % 2);
    for (OverlapCriterion c :
         {OverlapCriterion::kIoU, OverlapCriterion::kIoBB}) {
      const auto got = SensitivityAtFppi(set, c, 0.5, points);
      const auto expected = BruteForceFroc(set, c, 0.5, points);
      double prev = 0.0;
      for (double p : points) {
        ASSERT_NEAR(got.at(p), expected.at(p), 1e-12) << "seed " << seed;
        EXPECT_GE(got.at(p), prev) << "seed " << seed << " fppi " << p;
        prev = got.at(p);
      }
    }
  }
}

TEST(MapRangeProperty, InvariantUnderOrderPreservingScoreTransforms) {
  for (uint64_t seed = 1; seed <= 300; ++seed) {
    const EvalSet set = RandomSet(seed, 10, 6, 2, 2);
    EvalSet cubed = set, logistic = set;
    for (auto& d : cubed.detections)
      d.score = 0.5 * d.score * d.score * d.score;
    for (auto& d : logistic.detections) {
      d.score = 1.0 / (1.0 + std::exp(-8.0 * (d.score - 0.3)));
    }
    for (OverlapCriterion c :
         {OverlapCriterion::kIoU, OverlapCriterion::kIoBB}) {
      const double base = MapRange(set, c);
      EXPECT_EQ(MapRange(cubed, c), base) << "seed " << seed;
      EXPECT_EQ(MapRange(logistic, c), base) << "seed " << seed;
    }
  }
}

TEST(DuplicationProperty, DuplicatingEveryImageChangesNothing) {
  const std::vector<double> points = {0.5, 1, 2, 4, 8, 16};
  for (uint64_t seed = 1; seed <= 300; ++seed) {
    const EvalSet set = RandomSet(seed, 10, 6, 1 + seed % 3, 1 + seed % 2);
    EvalSet twice = set;
    twice.num_images = 2 * set.num_images;
    for (auto d : set.detections) {
      d.image += set.num_images;
      twice.detections.push_back(d);
    }
    for (auto g : set.ground_truth) {
      g.image += set.num_images;
      twice.ground_truth.push_back(g);
    }
    for (OverlapCriterion c :
         {OverlapCriterion::kIoU, OverlapCriterion::kIoBB}) {
      const MetricsReport a = PerClassReport(set, c, points);
      const MetricsReport b = PerClassReport(twice, c, points);
      EXPECT_NEAR(a.map_range, b.map_range, 1e-12) << "seed " << seed;
      EXPECT_NEAR(a.recall_range, b.recall_range, 1e-12) << "seed " << seed;
      ASSERT_EQ(a.per_class_ap.size(), b.per_class_ap.size());
      for (const auto& [cls, ap] : a.per_class_ap) {
        EXPECT_NEAR(ap, b.per_class_ap.at(cls), 1e-12) << "seed " << seed;
      }
      for (double p : points) {
        EXPECT_NEAR(a.sensitivity.at(p), b.sensitivity.at(p), 1e-12)
            << "seed " << seed << " fppi " << p;
      }
    }
  }
}

}  // namespace
}  // namespace fsd
