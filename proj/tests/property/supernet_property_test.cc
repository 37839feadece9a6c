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

// Randomized checks of the candidate operations and of the continuous
// relaxation: shapes, receptive fields, gradients, convex combination,
// softmax shift invariance and genotype validity.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "fsd/candidate_ops.h"
#include "fsd/grad_check.h"
#include "fsd/ops.h"
#include "fsd/rng.h"
#include "fsd/supernet.h"
#include "test_util.h"

namespace fsd {
namespace {

using testing::RandomTensor;
using testing::SinTensor;

std::vector<OpInstance> BuildSpace(OpSpace space, int64_t channels,
                                   uint64_t seed) {
  std::vector<OpInstance> ops;
  for (OpKind k : SpaceOps(space)) ops.push_back(BuildOp(k, channels, seed++));
  return ops;
}

Tensor Project(const Tensor& y) {
  return Sum(Mul(y, SinTensor(y.shape(), 0.9)));
}

TEST(CandidateOpProperty, EveryKindPreservesRandomShapes) {
  SplitMix64 rng(101);
  for (int trial = 0; trial < 12; ++trial) {
    const int64_t c = 4 * rng.UniformInt(1, 3);
    const int64_t b = rng.UniformInt(1, 2);
    const int64_t h = rng.UniformInt(2, 9), w = rng.UniformInt(2, 9);
    const Tensor x = RandomTensor({b, c, h, w}, trial, -1, 1, false);
    for (OpKind k : SpaceOps(OpSpace::kHead)) {
      const OpInstance op = BuildOp(k, c, trial);
      EXPECT_EQ(op.Apply(x).shape(), x.shape())
          << OpName(k) << " " << b << "x" << c << "x" << h << "x" << w;
    }
  }
}

// Impulse response of one full apply: which output positions change when a
// single input pixel is perturbed.
std::set<std::pair<int64_t, int64_t>> ChangedPositions(const OpInstance& op,
                                                       int64_t n,
                                                       int64_t centre,
                                                       uint64_t seed) {
  const Tensor base = RandomTensor({1, 4, n, n}, seed, -1, 1, false);
  Tensor bumped = RandomTensor({1, 4, n, n}, seed, -1, 1, false);
  for (int64_t ch = 0; ch < 4; ++ch) {
    bumped.mutable_data()[(ch * n + centre) * n + centre] += 1.0;
  }
  const Tensor y0 = op.Apply(base), y1 = op.Apply(bumped);
  std::set<std::pair<int64_t, int64_t>> changed;
  for (int64_t ch = 0; ch < 4; ++ch) {
    for (int64_t r = 0; r < n; ++r) {
      for (int64_t q = 0; q < n; ++q) {
        if (std::abs(y0.at({0, ch, r, q}) - y1.at({0, ch, r, q})) > 1e-12) {
          changed.insert({r - centre, q - centre});
        }
      }
    }
  }
  return changed;
}

TEST(CandidateOpProperty, DilationThreeReachesWhereDilationOneCannot) {
  // Group norm mixes every position of a group, so the impulse response is
  // compared on the raw convolution of each op's weights.
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const OpInstance d3 = BuildOp(OpKind::kConv3x3D3, 4, seed);
    const OpInstance d1 = BuildOp(OpKind::kConv3x3D1, 4, seed);
    const int64_t n = 11, centre = 5;
    Tensor x = Tensor::Zeros({1, 4, n, n});
    for (int64_t ch = 0; ch < 4; ++ch) {
      x.mutable_data()[(ch * n + centre) * n + centre] = 1.0;
    }
    const Tensor y3 =
        Conv2d(x, d3.params().front().second, Conv2dOptions::Square(1, 3, 3));
    const Tensor y1 =
        Conv2d(x, d1.params().front().second, Conv2dOptions::Square(1, 1, 1));
    int far3 = 0, far1 = 0;
    for (int64_t ch = 0; ch < 4; ++ch) {
      for (int64_t r = 0; r < n; ++r) {
        for (int64_t q = 0; q < n; ++q) {
          const int64_t dist =
              std::max(std::abs(r - centre), std::abs(q - centre));
          if (dist < 2) continue;
          if (y3.at({0, ch, r, q}) != 0.0) ++far3;
          if (y1.at({0, ch, r, q}) != 0.0) ++far1;
          if (dist > 3) EXPECT_EQ(y3.at({0, ch, r, q}), 0.0);
        }
      }
    }
    EXPECT_GT(far3, 0) << "seed " << seed;
    EXPECT_EQ(far1, 0) << "seed " << seed;
  }
  // Through the full op, the skip path touches only the perturbed pixel.
  const auto skip = ChangedPositions(BuildOp(OpKind::kSkip, 4, 1), 9, 4, 3);
  EXPECT_EQ(skip, (std::set<std::pair<int64_t, int64_t>>{{0, 0}}));
}

TEST(CandidateOpProperty, ParametricOpsPassGradCheck) {
  for (OpKind k : SpaceOps(OpSpace::kHead)) {
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      const OpInstance op = BuildOp(k, 4, seed);
      Tensor x = RandomTensor({1, 4, 4, 4}, seed + 40);
      std::vector<Tensor> inputs = {x};
      for (const auto& [name, t] : op.params()) inputs.push_back(t);
      const double err =
          GradCheck([&] { return Project(op.Apply(x)); }, inputs);
      EXPECT_LT(err, 1e-4) << OpName(k) << " seed " << seed;
    }
  }
}

TEST(CandidateOpProperty, NonLocalAttentionIsRowStochastic) {
  SplitMix64 rng(7);
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const int64_t c = 2 * rng.UniformInt(1, 4);
    const int64_t h = rng.UniformInt(1, 5), w = rng.UniformInt(1, 5);
    const OpInstance op = BuildOp(OpKind::kNonLocal, c, seed);
    const Tensor a =
        op.AttentionMap(RandomTensor({2, c, h, w}, seed, -3, 3, false));
    const Tensor rows = SumAxis(a, 2);
    for (int64_t i = 0; i < rows.numel(); ++i) {
      EXPECT_NEAR(rows[i], 1.0, 1e-12);
    }
    for (int64_t i = 0; i < a.numel(); ++i) EXPECT_GE(a[i], 0.0);
  }
}

TEST(MixedForwardProperty, InsideConvexHullOfOpOutputs) {
  for (OpSpace space : {OpSpace::kBackbone, OpSpace::kHead}) {
    const auto ops = BuildSpace(space, 4, 17);
    for (uint64_t seed = 1; seed <= 10; ++seed) {
      const Tensor x = RandomTensor({1, 4, 5, 5}, seed, -1, 1, false);
      const Tensor logits = RandomTensor({static_cast<int64_t>(ops.size())},
                                         seed + 1, -3, 3, false);
      const Tensor mixed = MixedForward(x, logits, ops);
      std::vector<Tensor> outs;
      for (const auto& op : ops) outs.push_back(op.Apply(x));
      for (int64_t i = 0; i < mixed.numel(); ++i) {
        double lo = outs[0][i], hi = outs[0][i];
        for (const auto& o : outs) {
          lo = std::min(lo, o[i]);
          hi = std::max(hi, o[i]);
        }
        EXPECT_GE(mixed[i], lo - 1e-12);
        EXPECT_LE(mixed[i], hi + 1e-12);
      }
    }
  }
}

TEST(MixedForwardProperty, LogitShiftLeavesOutputUnchanged) {
  const auto ops = BuildSpace(OpSpace::kHead, 4, 23);
  const int64_t k = static_cast<int64_t>(ops.size());
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const Tensor x = RandomTensor({1, 4, 4, 4}, seed, -1, 1, false);
    const Tensor logits = RandomTensor({k}, seed + 2, -3, 3, false);
    const double shift = (static_cast<double>(seed) - 5.5) * 13.0;
    const Tensor shifted = AddScalar(logits, shift);
    const Tensor a = MixedForward(x, logits, ops);
    const Tensor b = MixedForward(x, shifted, ops);
    EXPECT_LT(testing::MaxAbsDiff(a, b), 1e-12) << "shift " << shift;
  }
}

TEST(MixedForwardProperty, LogitGradientPassesGradCheck) {
  const auto ops = BuildSpace(OpSpace::kHead, 4, 29);
  const int64_t k = static_cast<int64_t>(ops.size());
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const Tensor x = RandomTensor({1, 4, 4, 4}, seed, -1, 1, false);
    Tensor logits = RandomTensor({k}, seed + 3, -2, 2);
    const double err = GradCheck(
        [&](const Tensor& l) { return Project(MixedForward(x, l, ops)); },
        logits);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

CellSpec Spec(OpSpace space, int nodes) {
  CellSpec s;
  s.space = space;
  s.num_nodes = nodes;
  return s;
}

TEST(DeriveGenotypeProperty, ValidAndShiftInvariant) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const OpSpace space = trial % 2 ? OpSpace::kHead : OpSpace::kBackbone;
    const int nodes = static_cast<int>(rng.UniformInt(1, 5));
    ArchParams alpha = InitAlpha(Spec(space, nodes), 3.0, trial);
    // Every third trial makes none the strongest op on every edge.
    const int none = SpaceIndex(space, OpKind::kNone);
    const int64_t k = alpha.logits.dim(1);
    if (trial % 3 == 0) {
      for (int e = 0; e < alpha.NumEdges(); ++e) {
        alpha.logits.mutable_data()[e * k + none] = 50.0;
      }
    }
    const Genotype g = DeriveGenotype(alpha);
    ASSERT_EQ(g.num_nodes(), nodes);
    EXPECT_EQ(g.space, space);
    for (int j = 0; j < nodes; ++j) {
      EXPECT_LT(g.nodes[j][0].from, g.nodes[j][1].from);
      for (const auto& e : g.nodes[j]) {
        EXPECT_NE(e.op, OpKind::kNone);
        EXPECT_GE(e.from, 0);
        EXPECT_LT(e.from, j + 2);
      }
    }

    ArchParams shifted = alpha;
    shifted.logits = alpha.logits.Clone();
    for (int e = 0; e < alpha.NumEdges(); ++e) {
      const double c = rng.Uniform(-20, 20);
      for (int64_t o = 0; o < k; ++o)
        shifted.logits.mutable_data()[e * k + o] += c;
    }
    EXPECT_EQ(DeriveGenotype(shifted), g) << "trial " << trial;
  }
}

}  // namespace
}  // namespace fsd
