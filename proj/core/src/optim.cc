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

#include "fsd/optim.h"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace fsd {
namespace {

void RequireGrad(const NamedTensor& member, const char* optimizer) {
  if (!member.second.has_grad()) {
    throw std::runtime_error(std::string(optimizer) + ": parameter '" +
                             member.first + "' has no gradient");
  }
}

}  // namespace

void ParamGroup::ZeroGrad() {
  for (auto& [name, t] : members) t.ZeroGrad();
}

void ParamGroup::SetRequiresGrad(bool value) {
  for (auto& [name, t] : members) t.set_requires_grad(value);
}

int64_t ParamGroup::NumScalars() const {
  int64_t n = 0;
  for (const auto& [name, t] : members) n += t.numel();
  return n;
}

uint64_t ParamGroup::Checksum() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : members) {
    for (double v : t.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

void CheckDisjoint(const std::vector<const ParamGroup*>& groups) {
  std::unordered_set<const TensorImpl*> seen;
  for (const ParamGroup* g : groups) {
    for (const auto& [name, t] : g->members) {
      if (!seen.insert(t.impl()).second) {
        throw std::logic_error("parameter '" + name +
                               "' belongs to more than one group");
      }
    }
  }
}

void SgdOptimizer::Step(ParamGroup& group, double lr, double momentum,
                        double weight_decay) {
  for (const auto& member : group.members) RequireGrad(member, "sgd");
  for (auto& [name, t] : group.members) {
    auto w = t.mutable_data();
    auto g = t.grad();
    auto& v = velocity_[t.impl()];
    if (v.empty()) v.assign(w.size(), 0.0);
    for (size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
    t.ZeroGrad();
  }
}

void AdamOptimizer::Step(ParamGroup& group, double lr,
                         std::pair<double, double> betas, double weight_decay) {
  for (const auto& member : group.members) RequireGrad(member, "adam");
  const auto [b1, b2] = betas;
  for (auto& [name, t] : group.members) {
    auto w = t.mutable_data();
    auto g = t.grad();
    State& s = state_[t.impl()];
    if (s.m.empty()) {
      s.m.assign(w.size(), 0.0);
      s.v.assign(w.size(), 0.0);
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(b1, double(s.step));
    const double c2 = 1.0 - std::pow(b2, double(s.step));
    for (size_t i = 0; i < w.size(); ++i) {
      w[i] -= lr * weight_decay * w[i];
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * g[i];
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = s.m[i] / c1;
      const double v_hat = s.v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
    t.ZeroGrad();
  }
}

}  // namespace fsd
