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

// Randomized checks of the detector: end-to-end gradient reach, the box
// coder round trip, deterministic inference and intensity-independent
// anchors.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fixtures.h"
#include "fsd/boxes.h"
#include "fsd/checkpoint.h"
#include "fsd/detector.h"
#include "fsd/ops.h"
#include "fsd/rng.h"
#include "fsd/supernet.h"
#include "fsd/synthdata.h"

namespace fsd {
namespace {

CellSpec Spec(OpSpace space, int nodes) {
  CellSpec s;
  s.space = space;
  s.num_nodes = nodes;
  return s;
}

bool AnyNonZeroGrad(const Tensor& t) {
  if (!t.has_grad()) return false;
  for (double g : t.grad()) {
    if (g != 0.0) return true;
  }
  return false;
}

TEST(DetectorProperty, LossReachesStemAndBothAlphas) {
  const auto data = GenerateSplit(testing::TinyData(4), Split::kTrain);
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const DetectorConfig cfg = testing::TinyDetector();
    const Detector det(
        cfg,
        ArchChoice::Supernet(
            InitAlpha(Spec(OpSpace::kBackbone, cfg.bone_nodes), 0.1, seed)),
        HeadChoice::Conv(ArchChoice::Supernet(
            InitAlpha(Spec(OpSpace::kHead, cfg.head_nodes), 0.1, seed + 1))),
        seed);
    SplitMix64 rng(seed);
    const std::vector<DetectionSample> batch(data.begin(), data.begin() + 2);
    det.Loss(batch, rng).total().Backward();

    int stem = 0;
    for (const auto& [name, t] : det.TrunkParams()) {
      if (name.rfind("stem.", 0) == 0) {
        ++stem;
        EXPECT_TRUE(AnyNonZeroGrad(t)) << name << " seed " << seed;
      }
    }
    EXPECT_GT(stem, 0);
    const auto alphas = det.ArchParamsList();
    ASSERT_EQ(alphas.size(), 2u);
    for (const auto& [name, t] : alphas) {
      EXPECT_TRUE(AnyNonZeroGrad(t)) << name << " seed " << seed;
    }
  }
}

TEST(BoxCoderProperty, DecodeInvertsEncode) {
  SplitMix64 rng(404);
  BoxCoder unit;
  BoxCoder weighted;
  weighted.weights = {10.0, 10.0, 5.0, 5.0};
  for (int i = 0; i < 2000; ++i) {
    const double ax = rng.Uniform(0, 100), ay = rng.Uniform(0, 100);
    const Box anchor{ax, ay, ax + rng.Uniform(1, 60), ay + rng.Uniform(1, 60)};
    const double tx = rng.Uniform(-20, 120), ty = rng.Uniform(-20, 120);
    const Box target{tx, ty, tx + rng.Uniform(1, 60), ty + rng.Uniform(1, 60)};
    for (const BoxCoder* coder : {&unit, &weighted}) {
      const auto deltas = coder->Encode(anchor, target);
      const Box back = coder->Decode(anchor, deltas);
      EXPECT_NEAR(back.x1, target.x1, 1e-9) << i;
      EXPECT_NEAR(back.y1, target.y1, 1e-9) << i;
      EXPECT_NEAR(back.x2, target.x2, 1e-9) << i;
      EXPECT_NEAR(back.y2, target.y2, 1e-9) << i;
    }
    // And the other way round for deltas inside the clamp.
    const std::array<double, 4> d = {rng.Uniform(-1, 1), rng.Uniform(-1, 1),
                                     rng.Uniform(-2, 2), rng.Uniform(-2, 2)};
    const auto again = unit.Encode(anchor, unit.Decode(anchor, d));
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(again[k], d[k], 1e-9) << i;
  }
}

TEST(DetectorProperty, InferenceIsDeterministic) {
  const auto data = GenerateSplit(testing::TinyData(2), Split::kVal);
  const DetectorConfig cfg = testing::TinyDetector();
  const auto bone = RandomGenotype(OpSpace::kBackbone, cfg.bone_nodes, 6);
  const auto head = RandomGenotype(OpSpace::kHead, cfg.head_nodes, 7);
  const Detector a(cfg, ArchChoice::Fixed(bone),
                   HeadChoice::Conv(ArchChoice::Fixed(head)), 11);
  // A second detector with other initial weights restored from a's.
  const Detector b(cfg, ArchChoice::Fixed(bone),
                   HeadChoice::Conv(ArchChoice::Fixed(head)), 12);
  RestoreInto(a.WeightParams(), b.WeightParams());
  size_t total = 0;
  for (const auto& s : data) {
    const InferenceResult r1 = a.Infer(s), r2 = a.Infer(s), r3 = b.Infer(s);
    ASSERT_EQ(r1.detections.size(), r2.detections.size());
    ASSERT_EQ(r1.detections.size(), r3.detections.size());
    total += r1.detections.size();
    for (size_t k = 0; k < r1.detections.size(); ++k) {
      EXPECT_EQ(r1.detections[k].box, r2.detections[k].box);
      EXPECT_EQ(r1.detections[k].score, r2.detections[k].score);
      EXPECT_EQ(r1.detections[k].box, r3.detections[k].box);
      EXPECT_EQ(r1.detections[k].score, r3.detections[k].score);
      EXPECT_EQ(r1.detections[k].class_id, r3.detections[k].class_id);
    }
  }
  EXPECT_GT(total, 0u);
}

TEST(DetectorProperty, AnchorsIgnoreImageIntensity) {
  const auto data = GenerateSplit(testing::TinyData(3), Split::kTrain);
  const DetectorConfig cfg = testing::TinyDetector();
  const Detector det(
      cfg,
      ArchChoice::Fixed(RandomGenotype(OpSpace::kBackbone, cfg.bone_nodes, 2)),
      HeadChoice::Fc(), 3);
  for (const auto& s : data) {
    const Tensor image =
        Reshape(s.image, {1, s.image.dim(0), s.image.dim(1), s.image.dim(2)});
    const Tensor f1 = det.Features(image);
    const Tensor f2 = det.Features(Scale(image, 2.0));
    ASSERT_EQ(f1.shape(), f2.shape());
    EXPECT_EQ(GenerateAnchors(cfg.anchor, f1.dim(2), f1.dim(3)),
              GenerateAnchors(cfg.anchor, f2.dim(2), f2.dim(3)));
    EXPECT_EQ(static_cast<int64_t>(
                  GenerateAnchors(cfg.anchor, f1.dim(2), f1.dim(3)).size()),
              f1.dim(2) * f1.dim(3) * cfg.anchor.PerLocation());
  }
}

}  // namespace
}  // namespace fsd
