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

#include "fsd/tensor.h"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace fsd {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::span<double> TensorImpl::EnsureGrad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->data.assign(1, 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (int64_t d : shape) {
    if (d < 0) {
      throw std::invalid_argument("Tensor: negative dimension in shape " +
                                  ShapeToString(shape));
    }
  }
  if (static_cast<int64_t>(data.size()) != NumElements(shape)) {
    throw std::invalid_argument(
        "Tensor: data length " + std::to_string(data.size()) +
        " does not match shape " + ShapeToString(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::Zeros(const Shape& shape, bool requires_grad) {
  return Full(shape, 0.0, requires_grad);
}

Tensor Tensor::Ones(const Shape& shape, bool requires_grad) {
  return Full(shape, 1.0, requires_grad);
}

Tensor Tensor::Full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(
      shape,
      std::vector<double>(static_cast<size_t>(NumElements(shape)), value),
      requires_grad);
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

int64_t Tensor::dim(int64_t axis) const {
  const int64_t n = ndim();
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw std::out_of_range("Tensor::dim: axis out of range for shape " +
                            ShapeToString(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::logic_error("Tensor::item on tensor of shape " +
                           ShapeToString(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int64_t>(index.size()) != ndim()) {
    throw std::out_of_range("Tensor::at: rank mismatch");
  }
  int64_t flat = 0;
  int64_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= impl_->shape[axis]) {
      throw std::out_of_range("Tensor::at: index out of range");
    }
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

void Tensor::ZeroGrad() { impl_->grad.assign(impl_->data.size(), 0.0); }

void Tensor::ClearGrad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::Clone() const {
  return Tensor(impl_->shape, impl_->data, false);
}

void Tensor::Backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("Backward: loss must be a scalar, got shape " +
                                ShapeToString(shape()));
  }
  if (!impl_->requires_grad) {
    throw std::invalid_argument(
        "Backward: loss has no provenance (no input requires grad)");
  }

  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const GradNode* fn = node->grad_fn.get();
    if (fn != nullptr && next < fn->inputs.size()) {
      TensorImpl* child = fn->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  impl_->EnsureGrad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->grad_fn && !node->grad.empty()) {
      node->grad_fn->backward(node->grad);
    }
  }
  for (TensorImpl* node : order) {
    if (node->grad_fn) {
      node->grad_fn.reset();
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

Tensor MakeResult(Shape shape, std::vector<double> data, std::string op,
                  std::vector<Tensor> inputs,
                  std::function<void(std::span<const double>)> backward) {
  Tensor out(std::move(shape), std::move(data), false);
  if (!g_grad_enabled) return out;
  const bool needs =
      std::any_of(inputs.begin(), inputs.end(),
                  [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto node = std::make_shared<GradNode>();
  node->op = std::move(op);
  node->inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) node->inputs.push_back(t.impl_ptr());
  node->backward = std::move(backward);
  out.impl_->grad_fn = std::move(node);
  out.impl_->requires_grad = true;
  return out;
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace fsd
