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

#ifndef FSD_TENSOR_H_
#define FSD_TENSOR_H_

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fsd {

using Shape = std::vector<int64_t>;

int64_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

struct TensorImpl;

// Provenance of a non-leaf tensor: the producing primitive, its inputs, and
// a closure that pushes d(loss)/d(output) into the inputs' grad buffers.
struct GradNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(std::span<const double>)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty when no gradient has been accumulated yet.
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<GradNode> grad_fn;

  // Returns the grad buffer, allocating zeros on first use.
  std::span<double> EnsureGrad();
};

// Reference-counted handle to a dense float64 array. Copies share storage,
// like parameter handles in most tensor libraries; use Clone() for a deep
// copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor Zeros(const Shape& shape, bool requires_grad = false);
  static Tensor Ones(const Shape& shape, bool requires_grad = false);
  static Tensor Full(const Shape& shape, double value,
                     bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t ndim() const { return static_cast<int64_t>(impl_->shape.size()); }
  // Negative axes count from the back.
  int64_t dim(int64_t axis) const;
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](int64_t flat_index) const {
    return impl_->data[flat_index];
  }
  double at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->EnsureGrad(); }
  // Sets the grad buffer to zeros (allocating it if absent).
  void ZeroGrad();
  // Drops the grad buffer entirely.
  void ClearGrad();

  // New leaf sharing no storage with this tensor.
  Tensor Clone() const;
  Tensor Detach() const { return Clone(); }

  // Reverse-mode sweep from this scalar. Leaf grads accumulate; the
  // provenance of every visited non-leaf is released afterwards.
  void Backward() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor MakeResult(Shape, std::vector<double>, std::string,
                           std::vector<Tensor>,
                           std::function<void(std::span<const double>)>);

  std::shared_ptr<TensorImpl> impl_;
};

using NamedTensor = std::pair<std::string, Tensor>;

// Builds the output of a primitive. The provenance node is attached only when
// gradients are enabled and some input requires grad; `backward` must then
// accumulate into the inputs that require grad.
Tensor MakeResult(Shape shape, std::vector<double> data, std::string op,
                  std::vector<Tensor> inputs,
                  std::function<void(std::span<const double>)> backward);

bool GradEnabled();

// Disables provenance recording for its lifetime (inference, frozen stages).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace fsd

#endif  // FSD_TENSOR_H_
