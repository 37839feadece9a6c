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

#ifndef FSD_OPTIM_H_
#define FSD_OPTIM_H_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fsd/tensor.h"

namespace fsd {

enum class GroupKind { kWeight, kArch };

// A partition of trainable tensors. Architecture logits live in kArch groups
// and every other trainable value in kWeight groups.
struct ParamGroup {
  GroupKind kind = GroupKind::kWeight;
  std::vector<NamedTensor> members;

  void ZeroGrad();
  void SetRequiresGrad(bool value);
  int64_t NumScalars() const;
  // FNV-1a over the raw bytes of every member, in order.
  uint64_t Checksum() const;
};

// Throws if any tensor appears in more than one group.
void CheckDisjoint(const std::vector<const ParamGroup*>& groups);

// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v.
// Grads are zeroed afterwards.
class SgdOptimizer {
 public:
  void Step(ParamGroup& group, double lr, double momentum, double weight_decay);

 private:
  std::unordered_map<const TensorImpl*, std::vector<double>> velocity_;
};

// Adam with decoupled decay (w <- w - lr * wd * w before the moment update)
// and bias correction. Grads are zeroed afterwards.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double eps = 1e-8) : eps_(eps) {}

  void Step(ParamGroup& group, double lr, std::pair<double, double> betas,
            double weight_decay);

 private:
  struct State {
    std::vector<double> m, v;
    int64_t step = 0;
  };
  double eps_;
  std::unordered_map<const TensorImpl*, State> state_;
};

}  // namespace fsd

#endif  // FSD_OPTIM_H_
