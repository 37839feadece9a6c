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

// Forward values of the primitives. Reference numbers come from
// tests/oracles/gen_oracles.py (PyTorch / torchvision in float64).

#include "fsd/ops.h"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "test_util.h"

namespace fsd {
namespace {

using testing::SinTensor;
using testing::Values;

struct Summary {
  double sum;
  double sumsq;
  std::vector<double> head;
};

void ExpectMatches(const Tensor& t, const Summary& s, double tol = 1e-12) {
  double sum = 0.0, sumsq = 0.0;
  for (double v : t.data()) {
    sum += v;
    sumsq += v * v;
  }
  EXPECT_NEAR(sum, s.sum, tol);
  EXPECT_NEAR(sumsq, s.sumsq, tol);
  for (size_t i = 0; i < s.head.size(); ++i) {
    EXPECT_NEAR(t[static_cast<int64_t>(i)], s.head[i], tol) << "index " << i;
  }
}

TEST(Conv2dTest, OnesKernelCountsOverlap) {
  const Tensor x = Tensor::Ones({1, 1, 3, 3});
  const Tensor w = Tensor::Ones({1, 1, 3, 3});
  const Tensor y = Conv2d(x, w, Conv2dOptions::Square(1, 1));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_DOUBLE_EQ(y.at({0, 0, 1, 1}), 9.0);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0, 0}), 4.0);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 2, 2}), 4.0);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0, 1}), 6.0);
}

TEST(Conv2dTest, DilatedGroupedMatchesReference) {
  const Tensor y = Conv2d(SinTensor({1, 4, 6, 6}), SinTensor({4, 2, 3, 3}, 1.0),
                          Conv2dOptions::Square(1, 2, 2, 2));
  ASSERT_EQ(y.shape(), (Shape{1, 4, 6, 6}));
  ExpectMatches(
      y, {25.680812251508566,
          238.83865880011314,
          {0.031990596947713751, 0.5155600475120371, 0.26007202318683847,
           0.75851551542165863, 0.44664543888955699, 0.87541976381423525}});
}

TEST(Conv2dTest, StridedMatchesReference) {
  const Tensor y = Conv2d(SinTensor({1, 4, 6, 6}), SinTensor({3, 4, 3, 3}, 0.5),
                          Conv2dOptions::Square(2, 1));
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  ExpectMatches(
      y, {12.509741650391909,
          102.80147548899976,
          {-1.0149862515356582, 0.27336448514508815, 1.94828069103154,
           0.60770927589458845, -1.1418155131334433, -2.5197398733189105}});
}

TEST(Conv2dTest, ChannelMismatchNamesShapes) {
  try {
    Conv2d(Tensor::Zeros({1, 3, 4, 4}), Tensor::Zeros({2, 2, 3, 3}));
    FAIL() << "expected a shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("conv2d"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[1, 3, 4, 4]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 2, 3, 3]"), std::string::npos) << msg;
  }
}

TEST(Conv2dTest, DilationPaddingPreservesSize) {
  for (int64_t d = 1; d <= 3; ++d) {
    for (int64_t k : {1, 3, 5}) {
      const Tensor y = Conv2d(SinTensor({1, 2, 9, 7}), SinTensor({2, 2, k, k}),
                              Conv2dOptions::Square(1, d * (k - 1) / 2, d));
      EXPECT_EQ(y.shape(), (Shape{1, 2, 9, 7})) << "d=" << d << " k=" << k;
    }
  }
}

TEST(SoftmaxTest, EqualLogitsAreUniform) {
  const Tensor y = Softmax(Tensor({2}, {0.0, 0.0}), 0);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(SoftmaxTest, RowsSumToOneOnNamedAxis) {
  const Tensor x = SinTensor({3, 4, 5}, 0.2);
  for (int64_t axis = 0; axis < 3; ++axis) {
    const Tensor y = Softmax(Scale(x, 7.0), axis);
    const Tensor s = SumAxis(y, axis);
    for (double v : s.data()) EXPECT_NEAR(v, 1.0, 1e-12);
    for (double v : y.data()) EXPECT_GT(v, 0.0);
  }
}

TEST(SoftmaxTest, LogSoftmaxAgreesWithLogOfSoftmax) {
  const Tensor x = SinTensor({4, 6}, 0.4);
  const Tensor a = LogSoftmax(Scale(x, 30.0), 1);
  const Tensor b = Softmax(Scale(x, 30.0), 1);
  for (int64_t i = 0; i < a.numel(); ++i)
    EXPECT_NEAR(a[i], std::log(b[i]), 1e-10);
}

TEST(MatMulTest, BatchedShapeAlgebra) {
  const Tensor x = SinTensor({2, 3, 4});
  const Tensor y = BatchMatMul(x, Transpose(x, 1, 2));
  EXPECT_EQ(y.shape(), (Shape{2, 3, 3}));
}

TEST(MatMulTest, SmallProductByHand) {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  EXPECT_EQ(Values(MatMul(a, b)), (std::vector<double>{58, 64, 139, 154}));
}

TEST(MatMulTest, InnerMismatchThrows) {
  EXPECT_THROW(MatMul(Tensor::Zeros({2, 3}), Tensor::Zeros({2, 3})),
               std::invalid_argument);
}

TEST(BroadcastTest, AddRowVector) {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b({3}, {10, 20, 30});
  EXPECT_EQ(Values(Add(a, b)), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  EXPECT_EQ(Values(Mul(a, Tensor::Scalar(2.0))),
            (std::vector<double>{2, 4, 6, 8, 10, 12}));
}

TEST(ShapeOpsTest, ConcatSliceRoundTrip) {
  const Tensor a = SinTensor({1, 2, 3, 3});
  const Tensor b = SinTensor({1, 3, 3, 3}, 1.0);
  const std::vector<Tensor> parts = {a, b};
  const Tensor c = Concat(parts, 1);
  ASSERT_EQ(c.shape(), (Shape{1, 5, 3, 3}));
  EXPECT_EQ(Values(Slice(c, 1, 0, 2)), Values(a));
  EXPECT_EQ(Values(Slice(c, 1, 2, 3)), Values(b));
}

TEST(ShapeOpsTest, ReshapeInfersOneAxis) {
  const Tensor r = Reshape(SinTensor({2, 6}), {3, -1});
  EXPECT_EQ(r.shape(), (Shape{3, 4}));
  EXPECT_THROW(Reshape(SinTensor({2, 6}), {5, -1}), std::invalid_argument);
}

TEST(ShapeOpsTest, TransposeSwapsAxes) {
  const Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor t = Transpose(x, 0, 1);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(Values(t), (std::vector<double>{1, 4, 2, 5, 3, 6}));
}

TEST(ShapeOpsTest, IndexSelectGathersRows) {
  const Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
  const std::vector<int64_t> idx = {2, 0, 2};
  EXPECT_EQ(Values(IndexSelect(x, idx)),
            (std::vector<double>{5, 6, 1, 2, 5, 6}));
}

TEST(PoolTest, AveragePoolExcludesPadding) {
  ExpectMatches(
      AvgPool2d(SinTensor({1, 2, 5, 5}), 3, 1, 1),
      {0.28609565357571765,
       4.9017214735195163,
       {0.52986402679408717, 0.55296472674862829, 0.57213468518179178,
        0.51386889798073976, 0.47122028364225438, 0.13149219734867296}});
}

TEST(PoolTest, MaxPoolMatchesReference) {
  ExpectMatches(
      MaxPool2d(SinTensor({1, 2, 5, 5}), 3, 2, 1),
      {11.951187853360219,
       10.953652260192881,
       {0.96127520297529989, 0.89569868568004762, 0.99588084453764003,
        0.96127520297529989, 0.79656547223608676, 0.67930465214481484}});
}

TEST(PoolTest, GlobalAverageAndUpsample) {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 6});
  EXPECT_DOUBLE_EQ(GlobalAvgPool(x).item(), 3.0);
  const Tensor u = UpsampleNearest(x, 2);
  EXPECT_EQ(u.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(Values(u), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 6, 6,
                                            3, 3, 6, 6}));
}

TEST(NormTest, GroupNormMatchesReference) {
  std::vector<double> gamma, beta;
  for (int k = 0; k < 4; ++k) {
    gamma.push_back(1.0 + 0.1 * k);
    beta.push_back(0.05 * k);
  }
  ExpectMatches(
      GroupNorm(SinTensor({2, 4, 3, 3}), 2, Tensor({4}, gamma),
                Tensor({4}, beta)),
      {3.0194440938959626,
       94.121849335843834,
       {-0.0002806227548219266, 0.52621298258562321, 0.9814481483363946,
        1.3038109304178291, 1.4496710385473786, 1.3992869913504078}},
      1e-10);
}

TEST(NormTest, L2NormalizeGivesUnitRows) {
  const Tensor y = L2NormalizeLastAxis(SinTensor({3, 5}, 0.7));
  for (int64_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < 5; ++c) s += y.at({r, c}) * y.at({r, c});
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(LossTest, CrossEntropyMatchesReference) {
  const std::vector<int> labels = {0, 2, 1, -1};
  EXPECT_NEAR(CrossEntropyWithLogits(SinTensor({4, 3}), labels).item(),
              1.2254919121876908, 1e-12);
}

TEST(LossTest, CrossEntropyAllIgnoredIsExactlyZero) {
  const std::vector<int> labels = {-1, -1};
  EXPECT_EQ(CrossEntropyWithLogits(SinTensor({2, 3}), labels).item(), 0.0);
}

TEST(LossTest, BinaryCrossEntropyMatchesReference) {
  const std::vector<int> targets = {1, 0, 1, 0, 1};
  EXPECT_NEAR(BinaryCrossEntropyWithLogits(SinTensor({5}, 0.3), targets).item(),
              0.71650778522018665, 1e-12);
}

TEST(LossTest, SmoothL1MatchesReference) {
  EXPECT_NEAR(
      SmoothL1(SinTensor({5, 4}), SinTensor({5, 4}, 2.0), 1.0 / 9.0).item(),
      18.626663264493573, 1e-12);
}

TEST(LossTest, SmoothL1WithZeroBetaIsL1) {
  const Tensor p({3}, {1.0, -2.0, 0.5});
  const Tensor t({3}, {0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(SmoothL1(p, t, 0.0).item(), 3.5);
}

TEST(CropAndResizeTest, MatchesAlignedRoiAlign) {
  const Tensor feat = SinTensor({1, 2, 8, 8});
  const std::vector<FeatureBox> boxes = {{1.0, 1.5, 6.0, 5.0, 0},
                                         {2.25, 0.75, 7.0, 7.5, 0}};
  const Tensor y = CropAndResize(feat, boxes, 3);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 3, 3}));
  ExpectMatches(
      y, {-2.8613009314400459,
          4.7194718918232867,
          {-0.051416633469945017, 0.062649887844551569, 0.15204339906921105,
           0.070247801603569485, -0.23187633792451542, -0.44268208212839233}});
}

TEST(CropAndResizeTest, ConstantFeatureGivesConstantGrid) {
  const Tensor feat = Tensor::Full({1, 3, 6, 6}, 2.5);
  const std::vector<FeatureBox> boxes = {{0.0, 0.0, 6.0, 6.0, 0}};
  const Tensor out = CropAndResize(feat, boxes, 7);
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(CropAndResizeTest, SingleCellSamplesTheCentre) {
  // f(y, x) = x at cell centres x + 0.5, so a bilinear sample at u reads u -
  // 0.5.
  std::vector<double> ramp;
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) ramp.push_back(x);
  }
  const Tensor feat({1, 1, 6, 6}, ramp);
  const std::vector<FeatureBox> boxes = {{1.0, 1.0, 4.0, 4.0, 0}};
  EXPECT_DOUBLE_EQ(CropAndResize(feat, boxes, 1).item(), 2.0);
}

TEST(CropAndResizeTest, ShiftOnRampShiftsBySlope) {
  std::vector<double> ramp;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) ramp.push_back(0.75 * x);
  }
  const Tensor feat({1, 1, 10, 10}, ramp);
  const std::vector<FeatureBox> a = {{1.0, 1.0, 5.0, 5.0, 0}};
  const std::vector<FeatureBox> b = {{2.0, 1.0, 6.0, 5.0, 0}};
  const Tensor ya = CropAndResize(feat, a, 7), yb = CropAndResize(feat, b, 7);
  for (int64_t i = 0; i < ya.numel(); ++i)
    EXPECT_NEAR(yb[i] - ya[i], 0.75, 1e-12);
}

TEST(CropAndResizeTest, ZeroAreaBoxReadsNearestCell) {
  const Tensor feat = SinTensor({1, 1, 5, 5});
  const std::vector<FeatureBox> boxes = {{2.6, 1.2, 2.6, 1.2, 0}};
  const Tensor y = CropAndResize(feat, boxes, 2);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, feat.at({0, 0, 1, 2}));
}

TEST(ReductionTest, SumMeanAndAxis) {
  const Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_DOUBLE_EQ(Sum(x).item(), 21.0);
  EXPECT_DOUBLE_EQ(Mean(x).item(), 3.5);
  EXPECT_EQ(Values(SumAxis(x, 0)), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ(SumAxis(x, 1, true).shape(), (Shape{2, 1}));
}

TEST(ElementwiseTest, ReluSigmoidScale) {
  const Tensor x({3}, {-1.0, 0.0, 2.0});
  EXPECT_EQ(Values(Relu(x)), (std::vector<double>{0.0, 0.0, 2.0}));
  EXPECT_DOUBLE_EQ(Sigmoid(Tensor::Scalar(0.0)).item(), 0.5);
  EXPECT_EQ(Values(AddScalar(Scale(x, 2.0), 1.0)),
            (std::vector<double>{-1.0, 1.0, 5.0}));
}

TEST(ElementwiseTest, WeightedSumAndAddN) {
  const std::vector<Tensor> terms = {Tensor({2}, {1, 2}),
                                     Tensor({2}, {10, 20})};
  EXPECT_EQ(Values(AddN(terms)), (std::vector<double>{11, 22}));
  EXPECT_EQ(Values(WeightedSum(terms, Tensor({2}, {0.5, 0.25}))),
            (std::vector<double>{3.0, 6.0}));
}

}  // namespace
}  // namespace fsd
