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

#include <benchmark/benchmark.h>

#include <vector>

#include "fsd/candidate_ops.h"
#include "fsd/detector.h"
#include "fsd/metrics.h"
#include "fsd/ops.h"
#include "fsd/region_graph.h"
#include "fsd/rng.h"
#include "fsd/search.h"
#include "fsd/supernet.h"
#include "fsd/synthdata.h"

namespace {

using namespace fsd;

Tensor Random(const Shape& shape, uint64_t seed, bool requires_grad) {
  SplitMix64 rng(seed);
  std::vector<double> v(static_cast<size_t>(NumElements(shape)));
  for (double& x : v) x = rng.Uniform(-1.0, 1.0);
  return Tensor(shape, std::move(v), requires_grad);
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int64_t c = state.range(0);
  const int64_t dilation = state.range(1);
  Tensor x = Random({2, c, 24, 24}, 1, true);
  Tensor w = Random({c, c, 3, 3}, 2, true);
  const auto opts = Conv2dOptions::Square(1, dilation, dilation);
  for (auto _ : state) {
    x.ZeroGrad();
    w.ZeroGrad();
    Tensor y = Sum(Conv2d(x, w, opts));
    y.Backward();
    benchmark::DoNotOptimize(w.grad());
  }
  state.SetItemsProcessed(state.iterations() * 2 * c * c * 9 * 24 * 24);
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({8, 1})->Args({16, 1})->Args({16, 3});

void BM_MixedEdgeForward(benchmark::State& state) {
  const auto space = static_cast<OpSpace>(state.range(0));
  std::vector<OpInstance> ops;
  for (OpKind kind : SpaceOps(space)) ops.push_back(BuildOp(kind, 16, 3));
  const Tensor logits = Random({static_cast<int64_t>(ops.size())}, 4, false);
  const Tensor x = Random({1, 16, 16, 16}, 5, false);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(MixedForward(x, logits, ops));
  }
}
BENCHMARK(BM_MixedEdgeForward)
    ->Arg(static_cast<int>(OpSpace::kBackbone))
    ->Arg(static_cast<int>(OpSpace::kHead));

void BM_ApplyGraph(benchmark::State& state) {
  const int64_t slices = 3;
  const int64_t instances = state.range(0);
  const int64_t dim = 64;
  const Tensor feats = Random({slices * instances, dim}, 6, false);
  const GraphParams p = GraphParams::Identity(dim);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ApplyGraph(feats, slices, p, true, 1.0));
  }
}
BENCHMARK(BM_ApplyGraph)->RangeMultiplier(2)->Range(8, 64);

EvalSet SyntheticEvalSet(int64_t images, int per_image) {
  SplitMix64 rng(7);
  EvalSet set;
  set.num_images = images;
  for (int64_t i = 0; i < images; ++i) {
    for (int k = 0; k < per_image; ++k) {
      const double x = rng.Uniform(0, 80), y = rng.Uniform(0, 80);
      set.ground_truth.push_back({i, Box{x, y, x + 12, y + 10}, 1});
      for (int d = 0; d < 3; ++d) {
        const double dx = rng.Uniform(-4, 4), dy = rng.Uniform(-4, 4);
        set.detections.push_back({i,
                                  Box{x + dx, y + dy, x + dx + 12, y + dy + 10},
                                  1, rng.Uniform()});
      }
    }
  }
  return set;
}

void BM_MapRange(benchmark::State& state) {
  const EvalSet set = SyntheticEvalSet(state.range(0), 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(MapRange(set, OverlapCriterion::kIoU));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(set.detections.size()));
}
BENCHMARK(BM_MapRange)->Arg(32)->Arg(256);

void BM_DetectorInfer(benchmark::State& state) {
  SyntheticConfig data;
  data.image_size = 64;
  data.num_val = 1;
  const auto samples = GenerateSplit(data, Split::kVal);
  DetectorConfig cfg;
  const Detector det(
      cfg,
      ArchChoice::Fixed(RandomGenotype(OpSpace::kBackbone, cfg.bone_nodes, 1)),
      HeadChoice::Conv(
          ArchChoice::Fixed(RandomGenotype(OpSpace::kHead, cfg.head_nodes, 2))),
      3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(det.Infer(samples.front()));
  }
}
BENCHMARK(BM_DetectorInfer)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
