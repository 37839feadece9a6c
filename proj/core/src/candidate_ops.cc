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

#include "fsd/candidate_ops.h"

#include <array>
#include <cmath>
#include <stdexcept>

#include "fsd/layers.h"
#include "fsd/ops.h"
#include "fsd/rng.h"

namespace fsd {
namespace {

struct OpInfo {
  OpKind kind;
  std::string_view name;
};

constexpr std::array<OpInfo, 13> kOpInfo = {{
    {OpKind::kNone, "none"},
    {OpKind::kSkip, "skip"},
    {OpKind::kConv3x3D1, "conv3x3_d1"},
    {OpKind::kConv3x3D2, "conv3x3_d2"},
    {OpKind::kConv3x3D3, "conv3x3_d3"},
    {OpKind::kDepthwise3x3, "depthwise3x3"},
    {OpKind::kDepthwise5x5, "depthwise5x5"},
    {OpKind::kFactorized5x5, "factorized5x5"},
    {OpKind::kRes2Conv3x3, "res2conv3x3"},
    {OpKind::kAvgPool3x3, "avgpool3x3"},
    {OpKind::kMaxPool3x3, "maxpool3x3"},
    {OpKind::kNonLocal, "nonlocal"},
    {OpKind::kSqueezeExcite, "squeeze_excite"},
}};

// Listing order of the two search spaces; derivation ties resolve toward the
// earlier entry.
constexpr std::array<OpKind, 8> kBackboneOps = {
    OpKind::kConv3x3D1,    OpKind::kNone,          OpKind::kSkip,
    OpKind::kDepthwise3x3, OpKind::kFactorized5x5, OpKind::kRes2Conv3x3,
    OpKind::kConv3x3D2,    OpKind::kConv3x3D3,
};

constexpr std::array<OpKind, 13> kHeadOps = {
    OpKind::kNone,          OpKind::kConv3x3D1,     OpKind::kSkip,
    OpKind::kDepthwise3x3,  OpKind::kFactorized5x5, OpKind::kDepthwise5x5,
    OpKind::kConv3x3D2,     OpKind::kConv3x3D3,     OpKind::kAvgPool3x3,
    OpKind::kRes2Conv3x3,   OpKind::kNonLocal,      OpKind::kMaxPool3x3,
    OpKind::kSqueezeExcite,
};

constexpr int64_t kRes2Scale = 4;
constexpr int64_t kSeReduction = 4;

void RequireDivisible(OpKind kind, int64_t channels, int64_t divisor) {
  if (channels < divisor || channels % divisor != 0) {
    throw std::invalid_argument(
        std::string(OpName(kind)) + " requires channels divisible by " +
        std::to_string(divisor) + ", got " + std::to_string(channels));
  }
}

}  // namespace

std::string_view OpName(OpKind kind) {
  for (const OpInfo& info : kOpInfo) {
    if (info.kind == kind) return info.name;
  }
  return "unknown";
}

std::optional<OpKind> ParseOpName(std::string_view name) {
  for (const OpInfo& info : kOpInfo) {
    if (info.name == name) return info.kind;
  }
  return std::nullopt;
}

std::string_view SpaceName(OpSpace space) {
  return space == OpSpace::kBackbone ? "backbone" : "head";
}

std::optional<OpSpace> ParseSpaceName(std::string_view name) {
  if (name == "backbone") return OpSpace::kBackbone;
  if (name == "head") return OpSpace::kHead;
  return std::nullopt;
}

std::span<const OpKind> SpaceOps(OpSpace space) {
  if (space == OpSpace::kBackbone) return kBackboneOps;
  return kHeadOps;
}

int SpaceIndex(OpSpace space, OpKind kind) {
  const auto ops = SpaceOps(space);
  for (size_t i = 0; i < ops.size(); ++i) {
    if (ops[i] == kind) return static_cast<int>(i);
  }
  return -1;
}

int DilationOf(OpKind kind) {
  switch (kind) {
    case OpKind::kConv3x3D2:
      return 2;
    case OpKind::kConv3x3D3:
      return 3;
    default:
      return 1;
  }
}

OpInstance BuildOp(OpKind kind, int64_t channels, uint64_t seed) {
  if (channels < 1) throw std::invalid_argument("BuildOp: channels < 1");
  OpInstance op;
  op.kind_ = kind;
  op.channels_ = channels;
  SplitMix64 rng(seed);
  const int64_t c = channels;
  auto& p = op.params_;
  auto add_norm = [&]() {
    p.emplace_back("norm.gamma", Tensor::Ones({c}, true));
    p.emplace_back("norm.beta", Tensor::Zeros({c}, true));
  };
  switch (kind) {
    case OpKind::kNone:
    case OpKind::kSkip:
    case OpKind::kAvgPool3x3:
    case OpKind::kMaxPool3x3:
      break;
    case OpKind::kConv3x3D1:
    case OpKind::kConv3x3D2:
    case OpKind::kConv3x3D3:
      p.emplace_back("conv.weight", HeNormal({c, c, 3, 3}, c * 9, rng));
      add_norm();
      break;
    case OpKind::kDepthwise3x3:
      p.emplace_back("conv.weight", HeNormal({c, 1, 3, 3}, 9, rng));
      add_norm();
      break;
    case OpKind::kDepthwise5x5:
      p.emplace_back("conv.weight", HeNormal({c, 1, 5, 5}, 25, rng));
      add_norm();
      break;
    case OpKind::kFactorized5x5:
      p.emplace_back("conv1x5.weight", HeNormal({c, c, 1, 5}, c * 5, rng));
      p.emplace_back("conv5x1.weight", HeNormal({c, c, 5, 1}, c * 5, rng));
      add_norm();
      break;
    case OpKind::kRes2Conv3x3: {
      RequireDivisible(kind, c, kRes2Scale);
      const int64_t w = c / kRes2Scale;
      for (int64_t k = 1; k < kRes2Scale; ++k) {
        p.emplace_back("split" + std::to_string(k) + ".weight",
                       HeNormal({w, w, 3, 3}, w * 9, rng));
      }
      add_norm();
      break;
    }
    case OpKind::kNonLocal: {
      RequireDivisible(kind, c, 2);
      const int64_t inner = c / 2;
      p.emplace_back("theta.weight", HeNormal({inner, c, 1, 1}, c, rng));
      p.emplace_back("phi.weight", HeNormal({inner, c, 1, 1}, c, rng));
      p.emplace_back("g.weight", HeNormal({inner, c, 1, 1}, c, rng));
      p.emplace_back("out.weight", HeNormal({c, inner, 1, 1}, inner, rng));
      add_norm();
      break;
    }
    case OpKind::kSqueezeExcite: {
      RequireDivisible(kind, c, kSeReduction);
      const int64_t inner = c / kSeReduction;
      Linear fc1 = Linear::Make(c, inner, std::sqrt(2.0 / double(c)), rng);
      Linear fc2 = Linear::Make(inner, c, std::sqrt(1.0 / double(inner)), rng);
      fc1.AppendParams("fc1.", p);
      fc2.AppendParams("fc2.", p);
      break;
    }
  }
  return op;
}

Tensor OpInstance::ConvNormReluApply(const Tensor& x, const Tensor& w,
                                     size_t norm_index, int64_t pad,
                                     int64_t dilation, int64_t groups) const {
  Tensor y = Conv2d(x, w, Conv2dOptions::Square(1, pad, dilation, groups));
  y = GroupNorm(y, NormGroups(channels_), P(norm_index), P(norm_index + 1));
  return Relu(y);
}

Tensor OpInstance::Apply(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != channels_) {
    throw std::invalid_argument(std::string(OpName(kind_)) + ": expected (B, " +
                                std::to_string(channels_) +
                                ", H, W) input, got " +
                                ShapeToString(x.shape()));
  }
  const int64_t c = channels_;
  switch (kind_) {
    case OpKind::kNone:
      return Tensor::Zeros(x.shape());
    case OpKind::kSkip:
      return x;
    case OpKind::kConv3x3D1:
    case OpKind::kConv3x3D2:
    case OpKind::kConv3x3D3: {
      const int64_t d = DilationOf(kind_);
      return ConvNormReluApply(x, P(0), 1, d, d, 1);
    }
    case OpKind::kDepthwise3x3:
      return ConvNormReluApply(x, P(0), 1, 1, 1, c);
    case OpKind::kDepthwise5x5:
      return ConvNormReluApply(x, P(0), 1, 2, 1, c);
    case OpKind::kFactorized5x5: {
      Tensor y = Conv2d(x, P(0), {1, 1, 0, 2, 1, 1, 1});
      y = Conv2d(y, P(1), {1, 1, 2, 0, 1, 1, 1});
      y = GroupNorm(y, NormGroups(c), P(2), P(3));
      return Relu(y);
    }
    case OpKind::kRes2Conv3x3: {
      const int64_t w = c / kRes2Scale;
      std::vector<Tensor> parts;
      parts.push_back(Slice(x, 1, 0, w));
      Tensor carry;
      for (int64_t k = 1; k < kRes2Scale; ++k) {
        Tensor in = Slice(x, 1, k * w, w);
        if (k > 1) in = Add(in, carry);
        carry = Conv2d(in, P(k - 1), Conv2dOptions::Square(1, 1));
        parts.push_back(carry);
      }
      Tensor y = Concat(parts, 1);
      y = GroupNorm(y, NormGroups(c), P(3), P(4));
      return Relu(y);
    }
    case OpKind::kAvgPool3x3:
      return AvgPool2d(x, 3, 1, 1);
    case OpKind::kMaxPool3x3:
      return MaxPool2d(x, 3, 1, 1);
    case OpKind::kNonLocal: {
      const int64_t b = x.dim(0), h = x.dim(2), wd = x.dim(3);
      const int64_t inner = c / 2;
      Tensor attn = AttentionMap(x);  // (B, HW, HW)
      Tensor g = Reshape(Conv2d(x, P(2)), {b, inner, h * wd});
      Tensor y = BatchMatMul(g, Transpose(attn, 1, 2));  // (B, inner, HW)
      y = Reshape(y, {b, inner, h, wd});
      y = Conv2d(y, P(3));
      y = Relu(GroupNorm(y, NormGroups(c), P(4), P(5)));
      return Add(x, y);
    }
    case OpKind::kSqueezeExcite: {
      const int64_t b = x.dim(0);
      Tensor s = Reshape(GlobalAvgPool(x), {b, c});
      s = Relu(Add(MatMul(s, P(0)), P(1)));
      s = Sigmoid(Add(MatMul(s, P(2)), P(3)));
      return Mul(x, Reshape(s, {b, c, 1, 1}));
    }
  }
  throw std::logic_error("unhandled op kind");
}

Tensor OpInstance::AttentionMap(const Tensor& x) const {
  if (kind_ != OpKind::kNonLocal) {
    throw std::logic_error("AttentionMap is only defined for nonlocal");
  }
  const int64_t b = x.dim(0), hw = x.dim(2) * x.dim(3);
  const int64_t inner = channels_ / 2;
  Tensor theta = Reshape(Conv2d(x, P(0)), {b, inner, hw});
  Tensor phi = Reshape(Conv2d(x, P(1)), {b, inner, hw});
  return Softmax(BatchMatMul(Transpose(theta, 1, 2), phi), -1);
}

int64_t OpInstance::ParamCount() const { return CountScalars(params_); }

}  // namespace fsd
