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

#include "fsd/grad_check.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fsd {
namespace {

double Evaluate(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  return f().item();
}

void CheckFinite(double v, size_t input, int64_t offset, const char* what) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("grad_check: non-finite " + std::string(what) +
                             " at input " + std::to_string(input) +
                             ", coordinate " + std::to_string(offset));
  }
}

}  // namespace

double GradCheck(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                 double eps) {
  return GradCheck([&f, x]() { return f(x); }, {x}, eps);
}

double GradCheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                 double eps) {
  std::vector<GradCoordinate> coords;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (int64_t i = 0; i < inputs[k].numel(); ++i) coords.push_back({k, i});
  }
  return GradCheckCoordinates(f, std::move(inputs), coords, eps);
}

double GradCheckCoordinates(const std::function<Tensor()>& f,
                            std::vector<Tensor> inputs,
                            const std::vector<GradCoordinate>& coords,
                            double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
  for (Tensor& t : inputs) {
    if (!t.is_leaf()) {
      throw std::invalid_argument("grad_check: inputs must be leaf tensors");
    }
    t.set_requires_grad(true);
    t.ZeroGrad();
  }
  Tensor y = f();
  CheckFinite(y.item(), 0, -1, "output");
  std::vector<std::vector<double>> analytic(inputs.size());
  if (y.requires_grad()) {
    y.Backward();
  }
  for (size_t k = 0; k < inputs.size(); ++k) {
    analytic[k].assign(inputs[k].grad().begin(), inputs[k].grad().end());
  }

  double worst = 0.0;
  for (const GradCoordinate& c : coords) {
    auto data = inputs[c.input].mutable_data();
    const double original = data[c.offset];
    data[c.offset] = original + eps;
    const double up = Evaluate(f);
    data[c.offset] = original - eps;
    const double down = Evaluate(f);
    data[c.offset] = original;
    CheckFinite(up, c.input, c.offset, "forward value");
    CheckFinite(down, c.input, c.offset, "forward value");
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[c.input][c.offset];
    CheckFinite(a, c.input, c.offset, "analytic gradient");
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  for (Tensor& t : inputs) t.ClearGrad();
  return worst;
}

}  // namespace fsd
