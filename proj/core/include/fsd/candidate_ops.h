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

#ifndef FSD_CANDIDATE_OPS_H_
#define FSD_CANDIDATE_OPS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsd/tensor.h"

namespace fsd {

enum class OpKind {
  kNone,
  kSkip,
  kConv3x3D1,
  kConv3x3D2,
  kConv3x3D3,
  kDepthwise3x3,
  kDepthwise5x5,
  kFactorized5x5,
  kRes2Conv3x3,
  kAvgPool3x3,
  kMaxPool3x3,
  kNonLocal,
  kSqueezeExcite,
};

// Lowercase identifiers used in genotype and alpha files.
std::string_view OpName(OpKind kind);
std::optional<OpKind> ParseOpName(std::string_view name);

enum class OpSpace { kBackbone, kHead };

std::string_view SpaceName(OpSpace space);
std::optional<OpSpace> ParseSpaceName(std::string_view name);

// Backbone: the 8 pool-free candidates. Head: the backbone candidates plus
// depthwise 5x5, both pools, non-local and squeeze-excite (13 total).
std::span<const OpKind> SpaceOps(OpSpace space);
// Index of `kind` within the space, or -1.
int SpaceIndex(OpSpace space, OpKind kind);

// Dilation of the 3x3 convolution kinds (1 for every other kind).
int DilationOf(OpKind kind);

// One candidate operation bound to a channel width. All kinds map
// (B, C, H, W) to (B, C, H, W).
class OpInstance {
 public:
  OpKind kind() const { return kind_; }
  int64_t channels() const { return channels_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  Tensor Apply(const Tensor& x) const;
  int64_t ParamCount() const;

  // Row-stochastic (B, HW, HW) attention of a non-local op.
  Tensor AttentionMap(const Tensor& x) const;

 private:
  friend OpInstance BuildOp(OpKind kind, int64_t channels, uint64_t seed);

  const Tensor& P(size_t i) const { return params_[i].second; }
  Tensor ConvNormReluApply(const Tensor& x, const Tensor& w, size_t norm_index,
                           int64_t pad, int64_t dilation, int64_t groups) const;

  OpKind kind_ = OpKind::kNone;
  int64_t channels_ = 0;
  std::vector<NamedTensor> params_;
};

// Deterministic He-initialized weights from `seed`. Throws
// std::invalid_argument when res2conv / squeeze-excite get a channel count
// not divisible by 4, or non-local an odd count.
OpInstance BuildOp(OpKind kind, int64_t channels, uint64_t seed);

inline Tensor Apply(const OpInstance& op, const Tensor& x) {
  return op.Apply(x);
}
inline int64_t ParamCount(const OpInstance& op) { return op.ParamCount(); }

}  // namespace fsd

#endif  // FSD_CANDIDATE_OPS_H_
