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

#include "fsd/layers.h"

#include <algorithm>
#include <cmath>

namespace fsd {

int64_t NormGroups(int64_t channels) {
  for (int64_t g = std::min<int64_t>(8, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

Tensor NormalInit(const Shape& shape, double stddev, SplitMix64& rng) {
  std::vector<double> data(static_cast<size_t>(NumElements(shape)));
  for (double& v : data) v = stddev * rng.Normal();
  return Tensor(shape, std::move(data), true);
}

Tensor HeNormal(const Shape& shape, int64_t fan_in, SplitMix64& rng) {
  return NormalInit(shape, std::sqrt(2.0 / double(fan_in)), rng);
}

ConvNormRelu ConvNormRelu::Make(int64_t cin, int64_t cout, int64_t kernel_h,
                                int64_t kernel_w, const Conv2dOptions& options,
                                SplitMix64& rng, bool relu) {
  ConvNormRelu b;
  const int64_t cin_g = cin / options.groups;
  b.weight = HeNormal({cout, cin_g, kernel_h, kernel_w},
                      cin_g * kernel_h * kernel_w, rng);
  b.gamma = Tensor::Ones({cout}, true);
  b.beta = Tensor::Zeros({cout}, true);
  b.options = options;
  b.relu = relu;
  return b;
}

Tensor ConvNormRelu::Forward(const Tensor& x) const {
  Tensor y = Conv2d(x, weight, options);
  y = GroupNorm(y, NormGroups(weight.dim(0)), gamma, beta);
  return relu ? Relu(y) : y;
}

void ConvNormRelu::AppendParams(const std::string& prefix,
                                std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + "weight", weight);
  out.emplace_back(prefix + "gamma", gamma);
  out.emplace_back(prefix + "beta", beta);
}

Linear Linear::Make(int64_t in, int64_t out, double stddev, SplitMix64& rng) {
  Linear l;
  l.weight = NormalInit({in, out}, stddev, rng);
  l.bias = Tensor::Zeros({out}, true);
  return l;
}

Tensor Linear::Forward(const Tensor& x) const {
  return Add(MatMul(x, weight), bias);
}

void Linear::AppendParams(const std::string& prefix,
                          std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + "weight", weight);
  out.emplace_back(prefix + "bias", bias);
}

int64_t CountScalars(const std::vector<NamedTensor>& params) {
  int64_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace fsd
