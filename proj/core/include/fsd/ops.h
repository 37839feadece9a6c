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

// Differentiable primitives. Every function records provenance when grads
// are enabled and some input requires grad. Shape errors throw
// std::invalid_argument naming the primitive and the offending shapes.

#ifndef FSD_OPS_H_
#define FSD_OPS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "fsd/tensor.h"

namespace fsd {

// Elementwise with numpy-style broadcasting.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);

// Sum of same-shaped tensors.
Tensor AddN(std::span<const Tensor> terms);
// sum_k weights[k] * terms[k]; weights has shape (K).
Tensor WeightedSum(std::span<const Tensor> terms, const Tensor& weights);

Tensor Scale(const Tensor& x, double factor);
Tensor AddScalar(const Tensor& x, double value);

// (M, K) x (K, N) -> (M, N).
Tensor MatMul(const Tensor& a, const Tensor& b);
// (B, M, K) x (B, K, N) -> (B, M, N).
Tensor BatchMatMul(const Tensor& a, const Tensor& b);

Tensor Transpose(const Tensor& x, int64_t axis0, int64_t axis1);
// One entry of `shape` may be -1.
Tensor Reshape(const Tensor& x, Shape shape);
Tensor Concat(std::span<const Tensor> parts, int64_t axis);
Tensor Slice(const Tensor& x, int64_t axis, int64_t start, int64_t length);
// Gathers entries along axis 0.
Tensor IndexSelect(const Tensor& x, std::span<const int64_t> indices);

struct Conv2dOptions {
  int64_t stride_h = 1, stride_w = 1;
  int64_t pad_h = 0, pad_w = 0;
  int64_t dilation_h = 1, dilation_w = 1;
  int64_t groups = 1;

  static Conv2dOptions Square(int64_t stride, int64_t pad, int64_t dilation = 1,
                              int64_t groups = 1) {
    return {stride, stride, pad, pad, dilation, dilation, groups};
  }
};

// x: (B, Cin, H, W); weight: (Cout, Cin / groups, KH, KW). No bias.
Tensor Conv2d(const Tensor& x, const Tensor& weight,
              const Conv2dOptions& options = {});

// Pooling windows are kernel x kernel; average excludes padded cells.
Tensor AvgPool2d(const Tensor& x, int64_t kernel, int64_t stride, int64_t pad);
Tensor MaxPool2d(const Tensor& x, int64_t kernel, int64_t stride, int64_t pad);
// (B, C, H, W) -> (B, C, 1, 1).
Tensor GlobalAvgPool(const Tensor& x);
Tensor UpsampleNearest(const Tensor& x, int64_t factor);

Tensor Relu(const Tensor& x);
Tensor Sigmoid(const Tensor& x);
Tensor Softmax(const Tensor& x, int64_t axis);
Tensor LogSoftmax(const Tensor& x, int64_t axis);

// x: (B, C, ...); gamma/beta: (C). Statistics per (sample, group).
Tensor GroupNorm(const Tensor& x, int64_t groups, const Tensor& gamma,
                 const Tensor& beta, double eps = 1e-5);

// Row-wise x / sqrt(|x|^2 + eps) over the last axis.
Tensor L2NormalizeLastAxis(const Tensor& x, double eps = 1e-12);

// Full reductions return shape [].
Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);
Tensor SumAxis(const Tensor& x, int64_t axis, bool keepdim = false);

// Summed Huber-style penalty: 0.5 d^2 / beta for |d| < beta, else |d| - 0.5
// beta. beta == 0 reduces to L1.
Tensor SmoothL1(const Tensor& pred, const Tensor& target, double beta);

// logits (N, K); labels in [0, K) or -1 to ignore. Mean over kept rows, or
// exactly 0 when no row is kept.
Tensor CrossEntropyWithLogits(const Tensor& logits,
                              std::span<const int> labels);
// logits (N); targets 1 / 0 or -1 to ignore. Same reduction as above.
Tensor BinaryCrossEntropyWithLogits(const Tensor& logits,
                                    std::span<const int> targets);

// Bilinear crop-and-resize. feature: (B, C, H, W); boxes: N x (x1, y1, x2, y2)
// in feature-grid coordinates where cell k has its centre at k + 0.5.
// Returns (N, C, out, out); zero-area boxes sample the nearest cell.
struct FeatureBox {
  double x1, y1, x2, y2;
  int64_t batch_index;
};
Tensor CropAndResize(const Tensor& feature, std::span<const FeatureBox> boxes,
                     int64_t out_size);

}  // namespace fsd

#endif  // FSD_OPS_H_
