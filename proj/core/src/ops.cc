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

#include "fsd/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fsd {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void ShapeError(const std::string& op, const Shape& a,
                             const Shape& b, const std::string& what = "") {
  std::string msg =
      op + ": shape mismatch " + ShapeToString(a) + " vs " + ShapeToString(b);
  if (!what.empty()) msg += " (" + what + ")";
  throw std::invalid_argument(msg);
}

[[noreturn]] void RankError(const std::string& op, const Shape& s,
                            const std::string& expected) {
  throw std::invalid_argument(op + ": expected " + expected + ", got shape " +
                              ShapeToString(s));
}

int64_t NormalizeAxis(int64_t axis, int64_t ndim, const char* op) {
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim) {
    throw std::invalid_argument(std::string(op) + ": axis out of range");
  }
  return axis;
}

bool NeedsGrad(const Tensor& t) { return t.requires_grad() && GradEnabled(); }

// ---------------------------------------------------------------------------
// Broadcasting helpers.

Shape BroadcastShape(const Shape& a, const Shape& b, const char* op) {
  const size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (size_t i = 0; i < nd; ++i) {
    const int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) ShapeError(op, a, b, "broadcast");
    out[i] = da == 1 ? db : da;
  }
  return out;
}

// Element strides of `in` viewed with the rank of `out`; 0 on broadcast axes.
std::vector<int64_t> BroadcastStrides(const Shape& in, const Shape& out) {
  const size_t nd = out.size();
  std::vector<int64_t> strides(nd, 0);
  int64_t s = 1;
  for (size_t k = 0; k < in.size(); ++k) {
    const size_t in_axis = in.size() - 1 - k;
    const size_t out_axis = nd - 1 - k;
    strides[out_axis] = in[in_axis] == 1 ? 0 : s;
    s *= in[in_axis];
  }
  return strides;
}

template <typename F>
void ForEachBroadcast(const Shape& out, const std::vector<int64_t>& sa,
                      const std::vector<int64_t>& sb, F&& f) {
  const int64_t nd = static_cast<int64_t>(out.size());
  const int64_t n = NumElements(out);
  std::vector<int64_t> idx(nd, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (int64_t d = nd - 1; d >= 0; --d) {
      if (++idx[d] < out[d]) {
        ia += sa[d];
        ib += sb[d];
        break;
      }
      ia -= sa[d] * (out[d] - 1);
      ib -= sb[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor Binary(const Tensor& a, const Tensor& b, BinaryKind kind,
              const char* name) {
  const Shape out_shape = BroadcastShape(a.shape(), b.shape(), name);
  const int64_t n = NumElements(out_shape);
  std::vector<double> out(n);
  const auto av = a.data();
  const auto bv = b.data();
  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinaryKind::kAdd:
        return x + y;
      case BinaryKind::kSub:
        return x - y;
      case BinaryKind::kMul:
        return x * y;
    }
    return 0.0;
  };
  const bool same = a.shape() == b.shape();
  const bool b_scalar = b.numel() == 1 && a.shape() == out_shape;
  if (same) {
    for (int64_t i = 0; i < n; ++i) out[i] = apply(av[i], bv[i]);
  } else if (b_scalar) {
    const double y = bv[0];
    for (int64_t i = 0; i < n; ++i) out[i] = apply(av[i], y);
  } else {
    ForEachBroadcast(out_shape, BroadcastStrides(a.shape(), out_shape),
                     BroadcastStrides(b.shape(), out_shape),
                     [&](int64_t o, int64_t ia, int64_t ib) {
                       out[o] = apply(av[ia], bv[ib]);
                     });
  }

  auto pa = a.impl_ptr();
  auto pb = b.impl_ptr();
  return MakeResult(
      out_shape, std::move(out), name, {a, b},
      [pa, pb, kind, out_shape, same, b_scalar](std::span<const double> g) {
        const int64_t n = static_cast<int64_t>(g.size());
        const bool ga = pa->requires_grad;
        const bool gb = pb->requires_grad;
        std::span<double> da, db;
        if (ga) da = pa->EnsureGrad();
        if (gb) db = pb->EnsureGrad();
        const auto& av = pa->data;
        const auto& bv = pb->data;
        auto accumulate = [&](int64_t o, int64_t ia, int64_t ib) {
          switch (kind) {
            case BinaryKind::kAdd:
              if (ga) da[ia] += g[o];
              if (gb) db[ib] += g[o];
              break;
            case BinaryKind::kSub:
              if (ga) da[ia] += g[o];
              if (gb) db[ib] -= g[o];
              break;
            case BinaryKind::kMul:
              if (ga) da[ia] += g[o] * bv[ib];
              if (gb) db[ib] += g[o] * av[ia];
              break;
          }
        };
        if (same) {
          for (int64_t i = 0; i < n; ++i) accumulate(i, i, i);
        } else if (b_scalar) {
          for (int64_t i = 0; i < n; ++i) accumulate(i, i, 0);
        } else {
          ForEachBroadcast(out_shape, BroadcastStrides(pa->shape, out_shape),
                           BroadcastStrides(pb->shape, out_shape), accumulate);
        }
      });
}

// Generic "apply f elementwise, derivative from (input, output)".
template <typename Fwd, typename Deriv>
Tensor Unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto px = x.impl_ptr();
  // The output values are needed by some derivatives; keep a copy only when
  // a backward pass can happen.
  std::shared_ptr<std::vector<double>> saved;
  if (NeedsGrad(x)) saved = std::make_shared<std::vector<double>>(out);
  return MakeResult(x.shape(), std::move(out), name, {x},
                    [px, saved, deriv](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      const auto& xv = px->data;
                      for (size_t i = 0; i < g.size(); ++i) {
                        dx[i] += g[i] * deriv(xv[i], (*saved)[i]);
                      }
                    });
}

void CheckConv4d(const Tensor& x, const char* op) {
  if (x.ndim() != 4) RankError(op, x.shape(), "(B, C, H, W)");
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise arithmetic.

Tensor Add(const Tensor& a, const Tensor& b) {
  return Binary(a, b, BinaryKind::kAdd, "add");
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  return Binary(a, b, BinaryKind::kSub, "sub");
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  return Binary(a, b, BinaryKind::kMul, "mul");
}

Tensor AddN(std::span<const Tensor> terms) {
  if (terms.empty()) throw std::invalid_argument("add_n: no inputs");
  const Shape& shape = terms[0].shape();
  std::vector<double> out(terms[0].data().begin(), terms[0].data().end());
  for (size_t k = 1; k < terms.size(); ++k) {
    if (terms[k].shape() != shape) ShapeError("add_n", shape, terms[k].shape());
    const auto v = terms[k].data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const Tensor& t : terms) impls.push_back(t.impl_ptr());
  return MakeResult(shape, std::move(out), "add_n",
                    std::vector<Tensor>(terms.begin(), terms.end()),
                    [impls](std::span<const double> g) {
                      for (const auto& p : impls) {
                        if (!p->requires_grad) continue;
                        auto d = p->EnsureGrad();
                        for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                      }
                    });
}

Tensor WeightedSum(std::span<const Tensor> terms, const Tensor& weights) {
  if (terms.empty()) throw std::invalid_argument("weighted_sum: no inputs");
  if (weights.numel() != static_cast<int64_t>(terms.size())) {
    ShapeError("weighted_sum", weights.shape(),
               {static_cast<int64_t>(terms.size())}, "one weight per term");
  }
  const Shape& shape = terms[0].shape();
  std::vector<double> out(terms[0].numel(), 0.0);
  const auto wv = weights.data();
  for (size_t k = 0; k < terms.size(); ++k) {
    if (terms[k].shape() != shape) {
      ShapeError("weighted_sum", shape, terms[k].shape());
    }
    const auto v = terms[k].data();
    const double wk = wv[k];
    for (size_t i = 0; i < out.size(); ++i) out[i] += wk * v[i];
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const Tensor& t : terms) impls.push_back(t.impl_ptr());
  auto pw = weights.impl_ptr();
  std::vector<Tensor> inputs(terms.begin(), terms.end());
  inputs.push_back(weights);
  return MakeResult(shape, std::move(out), "weighted_sum", std::move(inputs),
                    [impls, pw](std::span<const double> g) {
                      const bool need_w = pw->requires_grad;
                      auto dw = need_w ? pw->EnsureGrad() : std::span<double>();
                      for (size_t k = 0; k < impls.size(); ++k) {
                        const auto& p = impls[k];
                        const double wk = pw->data[k];
                        if (need_w) {
                          double dot = 0.0;
                          for (size_t i = 0; i < g.size(); ++i) {
                            dot += g[i] * p->data[i];
                          }
                          dw[k] += dot;
                        }
                        if (!p->requires_grad) continue;
                        auto d = p->EnsureGrad();
                        for (size_t i = 0; i < g.size(); ++i) d[i] += wk * g[i];
                      }
                    });
}

Tensor Scale(const Tensor& x, double factor) {
  return Unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor AddScalar(const Tensor& x, double value) {
  return Unary(
      x, "add_scalar", [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Matrix products.

Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    ShapeError("matmul", a.shape(), b.shape());
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  auto pa = a.impl_ptr();
  auto pb = b.impl_ptr();
  return MakeResult({m, n}, std::move(out), "matmul", {a, b},
                    [pa, pb, m, k, n](std::span<const double> g) {
                      ConstMap gm(g.data(), m, n);
                      if (pa->requires_grad) {
                        MutMap(pa->EnsureGrad().data(), m, k).noalias() +=
                            gm * ConstMap(pb->data.data(), k, n).transpose();
                      }
                      if (pb->requires_grad) {
                        MutMap(pb->EnsureGrad().data(), k, n).noalias() +=
                            ConstMap(pa->data.data(), m, k).transpose() * gm;
                      }
                    });
}

Tensor BatchMatMul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1)) {
    ShapeError("batch_matmul", a.shape(), b.shape());
  }
  const int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(bs * m * n);
  for (int64_t i = 0; i < bs; ++i) {
    MutMap(out.data() + i * m * n, m, n).noalias() =
        ConstMap(a.data().data() + i * m * k, m, k) *
        ConstMap(b.data().data() + i * k * n, k, n);
  }
  auto pa = a.impl_ptr();
  auto pb = b.impl_ptr();
  return MakeResult(
      {bs, m, n}, std::move(out), "batch_matmul", {a, b},
      [pa, pb, bs, m, k, n](std::span<const double> g) {
        for (int64_t i = 0; i < bs; ++i) {
          ConstMap gm(g.data() + i * m * n, m, n);
          if (pa->requires_grad) {
            MutMap(pa->EnsureGrad().data() + i * m * k, m, k).noalias() +=
                gm * ConstMap(pb->data.data() + i * k * n, k, n).transpose();
          }
          if (pb->requires_grad) {
            MutMap(pb->EnsureGrad().data() + i * k * n, k, n).noalias() +=
                ConstMap(pa->data.data() + i * m * k, m, k).transpose() * gm;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Layout.

Tensor Transpose(const Tensor& x, int64_t axis0, int64_t axis1) {
  const int64_t nd = x.ndim();
  axis0 = NormalizeAxis(axis0, nd, "transpose");
  axis1 = NormalizeAxis(axis1, nd, "transpose");
  Shape out_shape = x.shape();
  std::swap(out_shape[axis0], out_shape[axis1]);
  std::vector<int64_t> in_strides(nd);
  int64_t s = 1;
  for (int64_t d = nd - 1; d >= 0; --d) {
    in_strides[d] = s;
    s *= x.shape()[d];
  }
  std::vector<int64_t> perm_strides = in_strides;
  std::swap(perm_strides[axis0], perm_strides[axis1]);
  const std::vector<int64_t> zero(nd, 0);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  ForEachBroadcast(out_shape, perm_strides, zero,
                   [&](int64_t o, int64_t i, int64_t) { out[o] = xv[i]; });
  auto px = x.impl_ptr();
  return MakeResult(
      out_shape, std::move(out), "transpose", {x},
      [px, out_shape, perm_strides](std::span<const double> g) {
        auto dx = px->EnsureGrad();
        const std::vector<int64_t> zero(out_shape.size(), 0);
        ForEachBroadcast(out_shape, perm_strides, zero,
                         [&](int64_t o, int64_t i, int64_t) { dx[i] += g[o]; });
      });
}

Tensor Reshape(const Tensor& x, Shape shape) {
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) ShapeError("reshape", x.shape(), shape, "two -1 axes");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || x.numel() % known != 0) {
      ShapeError("reshape", x.shape(), shape);
    }
    shape[infer] = x.numel() / known;
  }
  if (NumElements(shape) != x.numel()) ShapeError("reshape", x.shape(), shape);
  auto px = x.impl_ptr();
  std::vector<double> out(x.data().begin(), x.data().end());
  return MakeResult(std::move(shape), std::move(out), "reshape", {x},
                    [px](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                    });
}

Tensor Concat(std::span<const Tensor> parts, int64_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& ref = parts[0].shape();
  axis = NormalizeAxis(axis, static_cast<int64_t>(ref.size()), "concat");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != static_cast<int64_t>(ref.size())) {
      ShapeError("concat", ref, p.shape());
    }
    for (size_t d = 0; d < ref.size(); ++d) {
      if (static_cast<int64_t>(d) != axis && p.shape()[d] != ref[d]) {
        ShapeError("concat", ref, p.shape());
      }
    }
    out_shape[axis] += p.shape()[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= ref[d];
  for (size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  const int64_t out_axis = out_shape[axis];
  std::vector<double> out(NumElements(out_shape));
  std::vector<int64_t> offsets;
  std::vector<std::shared_ptr<TensorImpl>> impls;
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t len = p.shape()[axis] * inner;
    const auto pv = p.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * len, len,
                  out.begin() + o * out_axis * inner + offset);
    }
    offsets.push_back(offset);
    impls.push_back(p.impl_ptr());
    offset += len;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return MakeResult(out_shape, std::move(out), "concat", std::move(inputs),
                    [impls, offsets, outer, inner, out_axis,
                     axis](std::span<const double> g) {
                      for (size_t k = 0; k < impls.size(); ++k) {
                        if (!impls[k]->requires_grad) continue;
                        auto dp = impls[k]->EnsureGrad();
                        const int64_t len = impls[k]->shape[axis] * inner;
                        for (int64_t o = 0; o < outer; ++o) {
                          const double* src =
                              g.data() + o * out_axis * inner + offsets[k];
                          double* dst = dp.data() + o * len;
                          for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
                        }
                      }
                    });
}

Tensor Slice(const Tensor& x, int64_t axis, int64_t start, int64_t length) {
  axis = NormalizeAxis(axis, x.ndim(), "slice");
  const int64_t extent = x.shape()[axis];
  if (start < 0 || length < 0 || start + length > extent) {
    throw std::invalid_argument(
        "slice: range [" + std::to_string(start) + ", " +
        std::to_string(start + length) + ") outside axis of size " +
        std::to_string(extent) + " in shape " + ShapeToString(x.shape()));
  }
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= x.shape()[d];
  for (int64_t d = axis + 1; d < x.ndim(); ++d) inner *= x.shape()[d];
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(NumElements(out_shape));
  const auto xv = x.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + (o * extent + start) * inner, length * inner,
                out.begin() + o * length * inner);
  }
  auto px = x.impl_ptr();
  return MakeResult(
      out_shape, std::move(out), "slice", {x},
      [px, outer, inner, extent, start, length](std::span<const double> g) {
        auto dx = px->EnsureGrad();
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = g.data() + o * length * inner;
          double* dst = dx.data() + (o * extent + start) * inner;
          for (int64_t i = 0; i < length * inner; ++i) {
            dst[i] += src[i];
          }
        }
      });
}

Tensor IndexSelect(const Tensor& x, std::span<const int64_t> indices) {
  if (x.ndim() < 1) RankError("index_select", x.shape(), "rank >= 1");
  const int64_t rows = x.dim(0);
  const int64_t inner = rows == 0 ? 0 : x.numel() / rows;
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<int64_t>(indices.size());
  std::vector<double> out(NumElements(out_shape));
  const auto xv = x.data();
  for (size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= rows) {
      throw std::out_of_range(
          "index_select: index " + std::to_string(indices[r]) +
          " out of range for shape " + ShapeToString(x.shape()));
    }
    std::copy_n(xv.begin() + indices[r] * inner, inner,
                out.begin() + r * inner);
  }
  auto px = x.impl_ptr();
  std::vector<int64_t> idx(indices.begin(), indices.end());
  return MakeResult(out_shape, std::move(out), "index_select", {x},
                    [px, idx, inner](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      for (size_t r = 0; r < idx.size(); ++r) {
                        for (int64_t i = 0; i < inner; ++i) {
                          dx[idx[r] * inner + i] += g[r * inner + i];
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Convolution via im2col + GEMM.

namespace {

struct ConvGeometry {
  int64_t batch, cin, h, w;
  int64_t cout, cin_g, kh, kw;
  int64_t groups, cout_g;
  int64_t ho, wo;
  Conv2dOptions o;

  int64_t ColRows() const { return cin_g * kh * kw; }
  int64_t ColCols() const { return ho * wo; }
  bool IsPointwise() const {
    return kh == 1 && kw == 1 && o.stride_h == 1 && o.stride_w == 1 &&
           o.pad_h == 0 && o.pad_w == 0;
  }
};

// Columns for one (sample, group): rows (c, ky, kx), cols (oy, ox).
void Im2Col(const double* x, const ConvGeometry& g, double* col) {
  const int64_t hw_out = g.ho * g.wo;
  for (int64_t c = 0; c < g.cin_g; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * hw_out;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy =
              oy * g.o.stride_h - g.o.pad_h + ky * g.o.dilation_h;
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.wo, 0.0);
            continue;
          }
          const double* src = xc + iy * g.w;
          const int64_t x_off = kx * g.o.dilation_w - g.o.pad_w;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.o.stride_w + x_off;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void Col2Im(const double* col, const ConvGeometry& g, double* dx) {
  const int64_t hw_out = g.ho * g.wo;
  for (int64_t c = 0; c < g.cin_g; ++c) {
    double* xc = dx + c * g.h * g.w;
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * hw_out;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy =
              oy * g.o.stride_h - g.o.pad_h + ky * g.o.dilation_h;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + oy * g.wo;
          double* dst = xc + iy * g.w;
          const int64_t x_off = kx * g.o.dilation_w - g.o.pad_w;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.o.stride_w + x_off;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d(const Tensor& x, const Tensor& weight,
              const Conv2dOptions& options) {
  CheckConv4d(x, "conv2d");
  if (weight.ndim() != 4) {
    RankError("conv2d", weight.shape(), "weight (Cout, Cin/groups, KH, KW)");
  }
  ConvGeometry g;
  g.o = options;
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.cin_g = weight.dim(1);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.groups = options.groups;
  if (g.groups < 1 || g.cin != g.cin_g * g.groups || g.cout % g.groups != 0) {
    ShapeError("conv2d", x.shape(), weight.shape(),
               "groups=" + std::to_string(g.groups));
  }
  g.cout_g = g.cout / g.groups;
  g.ho = (g.h + 2 * options.pad_h - options.dilation_h * (g.kh - 1) - 1) /
             options.stride_h +
         1;
  g.wo = (g.w + 2 * options.pad_w - options.dilation_w * (g.kw - 1) - 1) /
             options.stride_w +
         1;
  if (g.ho <= 0 || g.wo <= 0) {
    ShapeError("conv2d", x.shape(), weight.shape(), "empty output");
  }

  const int64_t rows = g.ColRows(), cols = g.ColCols();
  std::vector<double> out(g.batch * g.cout * cols);
  std::vector<double> col(g.IsPointwise() ? 0 : rows * cols);
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t gr = 0; gr < g.groups; ++gr) {
      const double* xin = xv + (b * g.cin + gr * g.cin_g) * g.h * g.w;
      const double* colp = xin;
      if (!g.IsPointwise()) {
        Im2Col(xin, g, col.data());
        colp = col.data();
      }
      MutMap(out.data() + (b * g.cout + gr * g.cout_g) * cols, g.cout_g, cols)
          .noalias() = ConstMap(wv + gr * g.cout_g * rows, g.cout_g, rows) *
                       ConstMap(colp, rows, cols);
    }
  }

  auto px = x.impl_ptr();
  auto pw = weight.impl_ptr();
  return MakeResult(
      {g.batch, g.cout, g.ho, g.wo}, std::move(out), "conv2d", {x, weight},
      [px, pw, g](std::span<const double> grad) {
        const int64_t rows = g.ColRows(), cols = g.ColCols();
        std::vector<double> col(g.IsPointwise() ? 0 : rows * cols);
        std::vector<double> dcol(rows * cols);
        const bool need_x = px->requires_grad;
        const bool need_w = pw->requires_grad;
        double* dw = need_w ? pw->EnsureGrad().data() : nullptr;
        double* dx = need_x ? px->EnsureGrad().data() : nullptr;
        for (int64_t b = 0; b < g.batch; ++b) {
          for (int64_t gr = 0; gr < g.groups; ++gr) {
            const int64_t x_off = (b * g.cin + gr * g.cin_g) * g.h * g.w;
            ConstMap gy(grad.data() + (b * g.cout + gr * g.cout_g) * cols,
                        g.cout_g, cols);
            if (need_w) {
              const double* colp = px->data.data() + x_off;
              if (!g.IsPointwise()) {
                Im2Col(colp, g, col.data());
                colp = col.data();
              }
              MutMap(dw + gr * g.cout_g * rows, g.cout_g, rows).noalias() +=
                  gy * ConstMap(colp, rows, cols).transpose();
            }
            if (need_x) {
              ConstMap wg(pw->data.data() + gr * g.cout_g * rows, g.cout_g,
                          rows);
              if (g.IsPointwise()) {
                MutMap(dx + x_off, rows, cols).noalias() += wg.transpose() * gy;
              } else {
                MutMap(dcol.data(), rows, cols).noalias() = wg.transpose() * gy;
                Col2Im(dcol.data(), g, dx + x_off);
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Pooling and resizing.

Tensor AvgPool2d(const Tensor& x, int64_t kernel, int64_t stride, int64_t pad) {
  CheckConv4d(x, "avg_pool2d");
  const int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = (h + 2 * pad - kernel) / stride + 1;
  const int64_t wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) RankError("avg_pool2d", x.shape(), "larger input");
  std::vector<double> out(planes * ho * wo);
  const auto xv = x.data();
  auto window = [=](int64_t oy, int64_t ox) {
    const int64_t y0 = std::max<int64_t>(oy * stride - pad, 0);
    const int64_t x0 = std::max<int64_t>(ox * stride - pad, 0);
    const int64_t y1 = std::min(oy * stride - pad + kernel, h);
    const int64_t x1 = std::min(ox * stride - pad + kernel, w);
    return std::array<int64_t, 4>{y0, x0, y1, x1};
  };
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        const auto [y0, x0, y1, x1] = window(oy, ox);
        double s = 0.0;
        for (int64_t y = y0; y < y1; ++y) {
          for (int64_t xx = x0; xx < x1; ++xx) s += xv[(p * h + y) * w + xx];
        }
        out[(p * ho + oy) * wo + ox] = s / double((y1 - y0) * (x1 - x0));
      }
    }
  }
  auto px = x.impl_ptr();
  return MakeResult(
      {x.dim(0), x.dim(1), ho, wo}, std::move(out), "avg_pool2d", {x},
      [px, planes, h, w, ho, wo, window](std::span<const double> g) {
        auto dx = px->EnsureGrad();
        for (int64_t p = 0; p < planes; ++p) {
          for (int64_t oy = 0; oy < ho; ++oy) {
            for (int64_t ox = 0; ox < wo; ++ox) {
              const auto [y0, x0, y1, x1] = window(oy, ox);
              const double v =
                  g[(p * ho + oy) * wo + ox] / double((y1 - y0) * (x1 - x0));
              for (int64_t y = y0; y < y1; ++y) {
                for (int64_t xx = x0; xx < x1; ++xx) {
                  dx[(p * h + y) * w + xx] += v;
                }
              }
            }
          }
        }
      });
}

Tensor MaxPool2d(const Tensor& x, int64_t kernel, int64_t stride, int64_t pad) {
  CheckConv4d(x, "max_pool2d");
  const int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = (h + 2 * pad - kernel) / stride + 1;
  const int64_t wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) RankError("max_pool2d", x.shape(), "larger input");
  std::vector<double> out(planes * ho * wo);
  std::vector<int64_t> argmax(out.size());
  const auto xv = x.data();
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_i = -1;
        for (int64_t ky = 0; ky < kernel; ++ky) {
          const int64_t y = oy * stride - pad + ky;
          if (y < 0 || y >= h) continue;
          for (int64_t kx = 0; kx < kernel; ++kx) {
            const int64_t xx = ox * stride - pad + kx;
            if (xx < 0 || xx >= w) continue;
            const int64_t i = (p * h + y) * w + xx;
            if (xv[i] > best) {
              best = xv[i];
              best_i = i;
            }
          }
        }
        out[(p * ho + oy) * wo + ox] = best;
        argmax[(p * ho + oy) * wo + ox] = best_i;
      }
    }
  }
  auto px = x.impl_ptr();
  return MakeResult({x.dim(0), x.dim(1), ho, wo}, std::move(out), "max_pool2d",
                    {x}, [px, argmax](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      for (size_t i = 0; i < g.size(); ++i) {
                        dx[argmax[i]] += g[i];
                      }
                    });
}

Tensor GlobalAvgPool(const Tensor& x) {
  CheckConv4d(x, "global_avg_pool");
  const int64_t planes = x.dim(0) * x.dim(1);
  const int64_t hw = x.dim(2) * x.dim(3);
  std::vector<double> out(planes);
  const auto xv = x.data();
  for (int64_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (int64_t i = 0; i < hw; ++i) s += xv[p * hw + i];
    out[p] = s / double(hw);
  }
  auto px = x.impl_ptr();
  return MakeResult({x.dim(0), x.dim(1), 1, 1}, std::move(out),
                    "global_avg_pool", {x},
                    [px, planes, hw](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      for (int64_t p = 0; p < planes; ++p) {
                        const double v = g[p] / double(hw);
                        for (int64_t i = 0; i < hw; ++i) dx[p * hw + i] += v;
                      }
                    });
}

Tensor UpsampleNearest(const Tensor& x, int64_t factor) {
  CheckConv4d(x, "upsample_nearest");
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor < 1");
  const int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = h * factor, wo = w * factor;
  std::vector<double> out(planes * ho * wo);
  const auto xv = x.data();
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t y = 0; y < ho; ++y) {
      for (int64_t xx = 0; xx < wo; ++xx) {
        out[(p * ho + y) * wo + xx] =
            xv[(p * h + y / factor) * w + xx / factor];
      }
    }
  }
  auto px = x.impl_ptr();
  return MakeResult(
      {x.dim(0), x.dim(1), ho, wo}, std::move(out), "upsample_nearest", {x},
      [px, planes, h, w, ho, wo, factor](std::span<const double> g) {
        auto dx = px->EnsureGrad();
        for (int64_t p = 0; p < planes; ++p) {
          for (int64_t y = 0; y < ho; ++y) {
            for (int64_t xx = 0; xx < wo; ++xx) {
              dx[(p * h + y / factor) * w + xx / factor] +=
                  g[(p * ho + y) * wo + xx];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Activations.

Tensor Relu(const Tensor& x) {
  return Unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor Sigmoid(const Tensor& x) {
  return Unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

namespace {

struct AxisSplit {
  int64_t outer, extent, inner;
};

AxisSplit SplitAround(const Shape& s, int64_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (int64_t d = 0; d < axis; ++d) r.outer *= s[d];
  for (size_t d = axis + 1; d < s.size(); ++d) r.inner *= s[d];
  return r;
}

}  // namespace

Tensor Softmax(const Tensor& x, int64_t axis) {
  axis = NormalizeAxis(axis, x.ndim(), "softmax");
  const AxisSplit sp = SplitAround(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      const int64_t base = o * sp.extent * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < sp.extent; ++k) {
        mx = std::max(mx, xv[base + k * sp.inner]);
      }
      double s = 0.0;
      for (int64_t k = 0; k < sp.extent; ++k) {
        const double e = std::exp(xv[base + k * sp.inner] - mx);
        out[base + k * sp.inner] = e;
        s += e;
      }
      for (int64_t k = 0; k < sp.extent; ++k) out[base + k * sp.inner] /= s;
    }
  }
  auto px = x.impl_ptr();
  auto saved = std::make_shared<std::vector<double>>(
      NeedsGrad(x) ? out : std::vector<double>{});
  return MakeResult(x.shape(), std::move(out), "softmax", {x},
                    [px, saved, sp](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      const auto& y = *saved;
                      for (int64_t o = 0; o < sp.outer; ++o) {
                        for (int64_t i = 0; i < sp.inner; ++i) {
                          const int64_t base = o * sp.extent * sp.inner + i;
                          double dot = 0.0;
                          for (int64_t k = 0; k < sp.extent; ++k) {
                            const int64_t j = base + k * sp.inner;
                            dot += g[j] * y[j];
                          }
                          for (int64_t k = 0; k < sp.extent; ++k) {
                            const int64_t j = base + k * sp.inner;
                            dx[j] += y[j] * (g[j] - dot);
                          }
                        }
                      }
                    });
}

Tensor LogSoftmax(const Tensor& x, int64_t axis) {
  axis = NormalizeAxis(axis, x.ndim(), "log_softmax");
  const AxisSplit sp = SplitAround(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      const int64_t base = o * sp.extent * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < sp.extent; ++k) {
        mx = std::max(mx, xv[base + k * sp.inner]);
      }
      double s = 0.0;
      for (int64_t k = 0; k < sp.extent; ++k) {
        s += std::exp(xv[base + k * sp.inner] - mx);
      }
      const double lse = mx + std::log(s);
      for (int64_t k = 0; k < sp.extent; ++k) {
        out[base + k * sp.inner] = xv[base + k * sp.inner] - lse;
      }
    }
  }
  auto px = x.impl_ptr();
  auto saved = std::make_shared<std::vector<double>>(
      NeedsGrad(x) ? out : std::vector<double>{});
  return MakeResult(x.shape(), std::move(out), "log_softmax", {x},
                    [px, saved, sp](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      const auto& y = *saved;
                      for (int64_t o = 0; o < sp.outer; ++o) {
                        for (int64_t i = 0; i < sp.inner; ++i) {
                          const int64_t base = o * sp.extent * sp.inner + i;
                          double total = 0.0;
                          for (int64_t k = 0; k < sp.extent; ++k) {
                            total += g[base + k * sp.inner];
                          }
                          for (int64_t k = 0; k < sp.extent; ++k) {
                            const int64_t j = base + k * sp.inner;
                            dx[j] += g[j] - std::exp(y[j]) * total;
                          }
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Normalization.

Tensor GroupNorm(const Tensor& x, int64_t groups, const Tensor& gamma,
                 const Tensor& beta, double eps) {
  if (x.ndim() < 2) RankError("group_norm", x.shape(), "(B, C, ...)");
  const int64_t batch = x.dim(0), channels = x.dim(1);
  if (groups < 1 || channels % groups != 0) {
    throw std::invalid_argument("group_norm: " + std::to_string(channels) +
                                " channels not divisible into " +
                                std::to_string(groups) + " groups");
  }
  if (gamma.numel() != channels || beta.numel() != channels) {
    ShapeError("group_norm", x.shape(), gamma.shape(), "affine size");
  }
  const int64_t spatial = x.numel() / (batch * channels);
  const int64_t cg = channels / groups;
  const int64_t count = cg * spatial;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(batch * groups);
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t gr = 0; gr < groups; ++gr) {
      const int64_t base = (b * channels + gr * cg) * spatial;
      double mean = 0.0;
      for (int64_t i = 0; i < count; ++i) mean += xv[base + i];
      mean /= double(count);
      double var = 0.0;
      for (int64_t i = 0; i < count; ++i) {
        const double d = xv[base + i] - mean;
        var += d * d;
      }
      var /= double(count);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[b * groups + gr] = is;
      for (int64_t c = 0; c < cg; ++c) {
        const int64_t ch = gr * cg + c;
        for (int64_t s = 0; s < spatial; ++s) {
          const int64_t i = base + c * spatial + s;
          const double xh = (xv[i] - mean) * is;
          (*xhat)[i] = xh;
          out[i] = gv[ch] * xh + bv[ch];
        }
      }
    }
  }
  auto px = x.impl_ptr();
  auto pg = gamma.impl_ptr();
  auto pb = beta.impl_ptr();
  return MakeResult(
      x.shape(), std::move(out), "group_norm", {x, gamma, beta},
      [px, pg, pb, xhat, inv_std, batch, channels, groups, spatial, cg,
       count](std::span<const double> g) {
        const auto& xh = *xhat;
        if (pg->requires_grad || pb->requires_grad) {
          auto dg = pg->requires_grad ? pg->EnsureGrad() : std::span<double>();
          auto db = pb->requires_grad ? pb->EnsureGrad() : std::span<double>();
          for (int64_t b = 0; b < batch; ++b) {
            for (int64_t c = 0; c < channels; ++c) {
              double sg = 0.0, sgx = 0.0;
              const int64_t base = (b * channels + c) * spatial;
              for (int64_t s = 0; s < spatial; ++s) {
                sg += g[base + s];
                sgx += g[base + s] * xh[base + s];
              }
              if (!dg.empty()) dg[c] += sgx;
              if (!db.empty()) db[c] += sg;
            }
          }
        }
        if (!px->requires_grad) return;
        auto dx = px->EnsureGrad();
        const auto& gv = pg->data;
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t gr = 0; gr < groups; ++gr) {
            const int64_t base = (b * channels + gr * cg) * spatial;
            double sum_d = 0.0, sum_dx = 0.0;
            for (int64_t c = 0; c < cg; ++c) {
              const double gm = gv[gr * cg + c];
              for (int64_t s = 0; s < spatial; ++s) {
                const int64_t i = base + c * spatial + s;
                const double d = g[i] * gm;
                sum_d += d;
                sum_dx += d * xh[i];
              }
            }
            const double is = (*inv_std)[b * groups + gr];
            const double n = double(count);
            for (int64_t c = 0; c < cg; ++c) {
              const double gm = gv[gr * cg + c];
              for (int64_t s = 0; s < spatial; ++s) {
                const int64_t i = base + c * spatial + s;
                const double d = g[i] * gm;
                dx[i] += is / n * (n * d - sum_d - xh[i] * sum_dx);
              }
            }
          }
        }
      });
}

Tensor L2NormalizeLastAxis(const Tensor& x, double eps) {
  if (x.ndim() < 1) RankError("l2_normalize", x.shape(), "rank >= 1");
  const int64_t d = x.dim(-1);
  const int64_t rows = d == 0 ? 0 : x.numel() / d;
  std::vector<double> out(x.numel());
  auto norms = std::make_shared<std::vector<double>>(rows);
  const auto xv = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t k = 0; k < d; ++k) s += xv[r * d + k] * xv[r * d + k];
    const double n = std::sqrt(s + eps);
    (*norms)[r] = n;
    for (int64_t k = 0; k < d; ++k) out[r * d + k] = xv[r * d + k] / n;
  }
  auto px = x.impl_ptr();
  auto saved = std::make_shared<std::vector<double>>(
      NeedsGrad(x) ? out : std::vector<double>{});
  return MakeResult(x.shape(), std::move(out), "l2_normalize", {x},
                    [px, saved, norms, rows, d](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      const auto& y = *saved;
                      for (int64_t r = 0; r < rows; ++r) {
                        double dot = 0.0;
                        for (int64_t k = 0; k < d; ++k) {
                          dot += g[r * d + k] * y[r * d + k];
                        }
                        const double n = (*norms)[r];
                        for (int64_t k = 0; k < d; ++k) {
                          dx[r * d + k] +=
                              (g[r * d + k] - y[r * d + k] * dot) / n;
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Reductions and losses.

Tensor Sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto px = x.impl_ptr();
  return MakeResult({}, {s}, "sum", {x}, [px](std::span<const double> g) {
    auto dx = px->EnsureGrad();
    for (double& v : dx) v += g[0];
  });
}

Tensor Mean(const Tensor& x) {
  if (x.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  return Scale(Sum(x), 1.0 / double(x.numel()));
}

Tensor SumAxis(const Tensor& x, int64_t axis, bool keepdim) {
  axis = NormalizeAxis(axis, x.ndim(), "sum_axis");
  const AxisSplit sp = SplitAround(x.shape(), axis);
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto xv = x.data();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t k = 0; k < sp.extent; ++k) {
      for (int64_t i = 0; i < sp.inner; ++i) {
        out[o * sp.inner + i] += xv[(o * sp.extent + k) * sp.inner + i];
      }
    }
  }
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
  }
  auto px = x.impl_ptr();
  return MakeResult(out_shape, std::move(out), "sum_axis", {x},
                    [px, sp](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      for (int64_t o = 0; o < sp.outer; ++o) {
                        for (int64_t k = 0; k < sp.extent; ++k) {
                          for (int64_t i = 0; i < sp.inner; ++i) {
                            dx[(o * sp.extent + k) * sp.inner + i] +=
                                g[o * sp.inner + i];
                          }
                        }
                      }
                    });
}

Tensor SmoothL1(const Tensor& pred, const Tensor& target, double beta) {
  if (pred.shape() != target.shape()) {
    ShapeError("smooth_l1", pred.shape(), target.shape());
  }
  const auto pv = pred.data();
  const auto tv = target.data();
  double total = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    const double d = std::abs(pv[i] - tv[i]);
    total += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  auto pp = pred.impl_ptr();
  auto pt = target.impl_ptr();
  return MakeResult(
      {}, {total}, "smooth_l1", {pred, target},
      [pp, pt, beta](std::span<const double> g) {
        const auto& pv = pp->data;
        const auto& tv = pt->data;
        auto dp = pp->requires_grad ? pp->EnsureGrad() : std::span<double>();
        auto dt = pt->requires_grad ? pt->EnsureGrad() : std::span<double>();
        for (size_t i = 0; i < pv.size(); ++i) {
          const double d = pv[i] - tv[i];
          double slope;
          if (std::abs(d) < beta) {
            slope = d / beta;
          } else {
            slope = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          }
          if (!dp.empty()) dp[i] += g[0] * slope;
          if (!dt.empty()) dt[i] -= g[0] * slope;
        }
      });
}

Tensor CrossEntropyWithLogits(const Tensor& logits,
                              std::span<const int> labels) {
  if (logits.ndim() != 2 ||
      logits.dim(0) != static_cast<int64_t>(labels.size())) {
    ShapeError("cross_entropy", logits.shape(),
               {static_cast<int64_t>(labels.size())});
  }
  const int64_t n = logits.dim(0), k = logits.dim(1);
  const auto xv = logits.data();
  auto probs = std::make_shared<std::vector<double>>(n * k);
  double total = 0.0;
  int64_t kept = 0;
  for (int64_t r = 0; r < n; ++r) {
    const int label = labels[r];
    if (label >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                              " >= classes " + std::to_string(k));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < k; ++c) mx = std::max(mx, xv[r * k + c]);
    double s = 0.0;
    for (int64_t c = 0; c < k; ++c) s += std::exp(xv[r * k + c] - mx);
    const double lse = mx + std::log(s);
    for (int64_t c = 0; c < k; ++c) {
      (*probs)[r * k + c] = std::exp(xv[r * k + c] - lse);
    }
    if (label < 0) continue;
    total += lse - xv[r * k + label];
    ++kept;
  }
  const double denom = kept > 0 ? double(kept) : 1.0;
  auto px = logits.impl_ptr();
  std::vector<int> lab(labels.begin(), labels.end());
  return MakeResult({}, {total / denom}, "cross_entropy", {logits},
                    [px, probs, lab, n, k, denom](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      for (int64_t r = 0; r < n; ++r) {
                        if (lab[r] < 0) continue;
                        for (int64_t c = 0; c < k; ++c) {
                          const double target = c == lab[r] ? 1.0 : 0.0;
                          dx[r * k + c] +=
                              g[0] * ((*probs)[r * k + c] - target) / denom;
                        }
                      }
                    });
}

Tensor BinaryCrossEntropyWithLogits(const Tensor& logits,
                                    std::span<const int> targets) {
  if (logits.numel() != static_cast<int64_t>(targets.size())) {
    ShapeError("binary_cross_entropy", logits.shape(),
               {static_cast<int64_t>(targets.size())});
  }
  const auto xv = logits.data();
  double total = 0.0;
  int64_t kept = 0;
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    const double x = xv[i];
    // softplus(x) - t * x, written to avoid overflow.
    total +=
        std::max(x, 0.0) - targets[i] * x + std::log1p(std::exp(-std::abs(x)));
    ++kept;
  }
  const double denom = kept > 0 ? double(kept) : 1.0;
  auto px = logits.impl_ptr();
  std::vector<int> t(targets.begin(), targets.end());
  return MakeResult({}, {total / denom}, "binary_cross_entropy", {logits},
                    [px, t, denom](std::span<const double> g) {
                      auto dx = px->EnsureGrad();
                      const auto& xv = px->data;
                      for (size_t i = 0; i < t.size(); ++i) {
                        if (t[i] < 0) continue;
                        const double x = xv[i];
                        const double sig =
                            x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                     : std::exp(x) / (1.0 + std::exp(x));
                        dx[i] += g[0] * (sig - t[i]) / denom;
                      }
                    });
}

// ---------------------------------------------------------------------------
// ROI crop-and-resize.

namespace {

struct BilinearTap {
  int64_t y0, x0, y1, x1;
  double wy, wx;  // weight of the (y1, x1) side
};

BilinearTap MakeTap(double v, double u, int64_t h, int64_t w) {
  v = std::clamp(v, 0.0, double(h - 1));
  u = std::clamp(u, 0.0, double(w - 1));
  BilinearTap t;
  t.y0 = static_cast<int64_t>(std::floor(v));
  t.x0 = static_cast<int64_t>(std::floor(u));
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.wy = v - double(t.y0);
  t.wx = u - double(t.x0);
  return t;
}

}  // namespace

Tensor CropAndResize(const Tensor& feature, std::span<const FeatureBox> boxes,
                     int64_t out_size) {
  CheckConv4d(feature, "crop_and_resize");
  if (out_size < 1)
    throw std::invalid_argument("crop_and_resize: out_size < 1");
  const int64_t batch = feature.dim(0), c = feature.dim(1), h = feature.dim(2),
                w = feature.dim(3);
  const int64_t n = static_cast<int64_t>(boxes.size());
  const int64_t cells = out_size * out_size;
  // One tap per output cell per box; channels share the tap.
  auto taps = std::make_shared<std::vector<BilinearTap>>(n * cells);
  for (int64_t r = 0; r < n; ++r) {
    const FeatureBox& b = boxes[r];
    if (b.batch_index < 0 || b.batch_index >= batch) {
      throw std::out_of_range("crop_and_resize: batch index " +
                              std::to_string(b.batch_index) + " out of range");
    }
    const bool degenerate = !(b.x2 > b.x1) || !(b.y2 > b.y1);
    for (int64_t i = 0; i < out_size; ++i) {
      for (int64_t j = 0; j < out_size; ++j) {
        BilinearTap t;
        if (degenerate) {
          const double cy = std::round(0.5 * (b.y1 + b.y2) - 0.5);
          const double cx = std::round(0.5 * (b.x1 + b.x2) - 0.5);
          t = MakeTap(cy, cx, h, w);
          t.wy = t.wx = 0.0;
        } else {
          const double sy = b.y1 + (i + 0.5) * (b.y2 - b.y1) / double(out_size);
          const double sx = b.x1 + (j + 0.5) * (b.x2 - b.x1) / double(out_size);
          t = MakeTap(sy - 0.5, sx - 0.5, h, w);
        }
        (*taps)[r * cells + i * out_size + j] = t;
      }
    }
  }
  std::vector<int64_t> batch_index(n);
  for (int64_t r = 0; r < n; ++r) batch_index[r] = boxes[r].batch_index;

  std::vector<double> out(n * c * cells);
  const auto fv = feature.data();
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* plane = fv.data() + (batch_index[r] * c + ch) * h * w;
      for (int64_t k = 0; k < cells; ++k) {
        const BilinearTap& t = (*taps)[r * cells + k];
        const double top =
            plane[t.y0 * w + t.x0] * (1 - t.wx) + plane[t.y0 * w + t.x1] * t.wx;
        const double bot =
            plane[t.y1 * w + t.x0] * (1 - t.wx) + plane[t.y1 * w + t.x1] * t.wx;
        out[(r * c + ch) * cells + k] = top * (1 - t.wy) + bot * t.wy;
      }
    }
  }
  auto pf = feature.impl_ptr();
  return MakeResult(
      {n, c, out_size, out_size}, std::move(out), "crop_and_resize", {feature},
      [pf, taps, batch_index, n, c, h, w, cells](std::span<const double> g) {
        auto df = pf->EnsureGrad();
        for (int64_t r = 0; r < n; ++r) {
          for (int64_t ch = 0; ch < c; ++ch) {
            double* plane = df.data() + (batch_index[r] * c + ch) * h * w;
            for (int64_t k = 0; k < cells; ++k) {
              const BilinearTap& t = (*taps)[r * cells + k];
              const double v = g[(r * c + ch) * cells + k];
              plane[t.y0 * w + t.x0] += v * (1 - t.wy) * (1 - t.wx);
              plane[t.y0 * w + t.x1] += v * (1 - t.wy) * t.wx;
              plane[t.y1 * w + t.x0] += v * t.wy * (1 - t.wx);
              plane[t.y1 * w + t.x1] += v * t.wy * t.wx;
            }
          }
        }
      });
}

}  // namespace fsd
