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

#ifndef FSD_GRAD_CHECK_H_
#define FSD_GRAD_CHECK_H_

#include <functional>
#include <vector>

#include "fsd/tensor.h"

namespace fsd {

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `x` must be a leaf; its requires_grad flag is forced on during the check.
// Throws std::runtime_error naming the coordinate on a non-finite value.
double GradCheck(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                 double eps = 1e-5);

// Same measure over several leaves that `f` closes over.
double GradCheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                 double eps = 1e-5);

// Checks only `num_coords` coordinates picked by `coords` (pairs of
// input index and flat offset); used for large models.
struct GradCoordinate {
  size_t input;
  int64_t offset;
};
double GradCheckCoordinates(const std::function<Tensor()>& f,
                            std::vector<Tensor> inputs,
                            const std::vector<GradCoordinate>& coords,
                            double eps = 1e-5);

}  // namespace fsd

#endif  // FSD_GRAD_CHECK_H_
