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

#ifndef FSD_LAYERS_H_
#define FSD_LAYERS_H_

#include <string>
#include <vector>

#include "fsd/ops.h"
#include "fsd/rng.h"
#include "fsd/tensor.h"

namespace fsd {

// Largest divisor of `channels` not exceeding min(8, channels).
int64_t NormGroups(int64_t channels);

// N(0, 2 / fan_in) entries.
Tensor HeNormal(const Shape& shape, int64_t fan_in, SplitMix64& rng);
Tensor NormalInit(const Shape& shape, double stddev, SplitMix64& rng);

// Bias-free convolution, group normalization, optional ReLU.
struct ConvNormRelu {
  Tensor weight;
  Tensor gamma;
  Tensor beta;
  Conv2dOptions options;
  bool relu = true;

  static ConvNormRelu Make(int64_t cin, int64_t cout, int64_t kernel_h,
                           int64_t kernel_w, const Conv2dOptions& options,
                           SplitMix64& rng, bool relu = true);
  Tensor Forward(const Tensor& x) const;
  void AppendParams(const std::string& prefix,
                    std::vector<NamedTensor>& out) const;
};

// y = x W + b with W stored (in, out).
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear Make(int64_t in, int64_t out, double stddev, SplitMix64& rng);
  Tensor Forward(const Tensor& x) const;
  void AppendParams(const std::string& prefix,
                    std::vector<NamedTensor>& out) const;
};

int64_t CountScalars(const std::vector<NamedTensor>& params);

}  // namespace fsd

#endif  // FSD_LAYERS_H_
