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

#include "fsd/region_graph.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fsd/ops.h"

namespace fsd {

ElementwiseMap ElementwiseMap::Make(double gain, double bias) {
  return {Tensor({1}, {gain}, true), Tensor({1}, {bias}, true)};
}

Tensor ElementwiseMap::Apply(const Tensor& a) const {
  return Relu(Add(Mul(a, gain), bias));
}

GraphParams GraphParams::Identity(int64_t dim, double sigma_gain) {
  std::vector<double> s(dim * dim, 0.0);
  for (int64_t i = 0; i < dim; ++i) s[i * dim + i] = sigma_gain;
  return {ElementwiseMap::Make(1.0, 0.0), ElementwiseMap::Make(1.0, 0.0),
          ElementwiseMap::Make(1.0, 0.0),
          Tensor({dim, dim}, std::move(s), true)};
}

GraphParams GraphParams::Zeros(int64_t dim) {
  return {ElementwiseMap::Make(0.0, 0.0), ElementwiseMap::Make(0.0, 0.0),
          ElementwiseMap::Make(0.0, 0.0), Tensor::Zeros({dim, dim}, true)};
}

void GraphParams::AppendParams(const std::string& prefix,
                               std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + "phi.gain", phi.gain);
  out.emplace_back(prefix + "phi.bias", phi.bias);
  out.emplace_back(prefix + "psi.gain", psi.gain);
  out.emplace_back(prefix + "psi.bias", psi.bias);
  out.emplace_back(prefix + "delta.gain", delta.gain);
  out.emplace_back(prefix + "delta.bias", delta.bias);
  out.emplace_back(prefix + "sigma", sigma);
}

Tensor ReshapeInstances(const Tensor& features, int64_t n_slices) {
  if (features.ndim() != 2) {
    throw std::invalid_argument(
        "reshape_instances: features must be (N, D), got " +
        ShapeToString(features.shape()));
  }
  const int64_t n = features.dim(0);
  if (n_slices <= 0 || n % n_slices != 0) {
    throw std::invalid_argument(
        "reshape_instances: N=" + std::to_string(n) +
        " is not divisible by n_slices=" + std::to_string(n_slices));
  }
  return Reshape(features, {n_slices, n / n_slices, features.dim(1)});
}

Tensor FlattenInstances(const Tensor& batch) {
  if (batch.ndim() != 3) {
    throw std::invalid_argument("flatten_instances: expected rank 3, got " +
                                ShapeToString(batch.shape()));
  }
  return Reshape(batch, {batch.dim(0) * batch.dim(1), batch.dim(2)});
}

Tensor BuildAdjacency(const Tensor& batch) {
  return BatchMatMul(batch, Transpose(batch, 1, 2));
}

Tensor Enhance(const Tensor& adjacency, const GraphParams& p) {
  const Tensor at = Transpose(adjacency, 1, 2);
  return BatchMatMul(BatchMatMul(p.phi.Apply(at), p.psi.Apply(adjacency)),
                     p.delta.Apply(at));
}

Tensor Propagate(const Tensor& enhanced, const Tensor& batch,
                 const GraphParams& p) {
  const Tensor ax = BatchMatMul(enhanced, batch);
  const int64_t d = batch.dim(2);
  if (p.sigma.ndim() != 2 || p.sigma.dim(0) != d || p.sigma.dim(1) != d) {
    throw std::invalid_argument(
        "propagate: sigma " + ShapeToString(p.sigma.shape()) +
        " does not match feature dim " + std::to_string(d));
  }
  return Relu(Reshape(MatMul(Reshape(ax, {-1, d}), p.sigma), batch.shape()));
}

Tensor Fuse(const Tensor& original, const Tensor& propagated) {
  return Add(original, Reshape(propagated, original.shape()));
}

GraphOutput ApplyGraph(const Tensor& features, int64_t n_slices,
                       const GraphParams& p, bool normalize,
                       double propagate_scale) {
  const Tensor x = ReshapeInstances(features, n_slices);
  const Tensor basis = normalize ? L2NormalizeLastAxis(x) : x;
  const Tensor enhanced = Enhance(BuildAdjacency(basis), p);
  const Tensor weights =
      propagate_scale == 1.0 ? enhanced : Scale(enhanced, propagate_scale);
  return {Fuse(features, Propagate(weights, x, p)), enhanced};
}

std::vector<RelationRecord> RelationRecords(const Tensor& enhanced) {
  if (enhanced.ndim() != 3 || enhanced.dim(1) != enhanced.dim(2)) {
    throw std::invalid_argument(
        "relation_records: expected (N_s, N_i, N_i), got " +
        ShapeToString(enhanced.shape()));
  }
  const int64_t ns = enhanced.dim(0), ni = enhanced.dim(1);
  const auto v = enhanced.data();
  std::vector<RelationRecord> out;
  for (int64_t s = 0; s < ns; ++s) {
    const double* a = v.data() + s * ni * ni;
    double top = 0.0;
    bool any = false;
    for (int64_t i = 0; i < ni; ++i) {
      for (int64_t j = i + 1; j < ni; ++j) {
        top = any ? std::max(top, a[i * ni + j]) : a[i * ni + j];
        any = true;
      }
    }
    for (int64_t i = 0; i < ni; ++i) {
      for (int64_t j = i + 1; j < ni; ++j) {
        const double raw = a[i * ni + j];
        const double opacity =
            top > 0.0 ? std::clamp(raw / top, 0.0, 1.0) : 0.0;
        out.push_back({s, i, j, raw, opacity});
      }
    }
  }
  return out;
}

void ExportRelations(const std::filesystem::path& path, const Tensor& enhanced,
                     std::span<const RelationInstance> instances,
                     std::span<const int64_t> slice_ids) {
  const auto records = RelationRecords(enhanced);
  const int64_t ns = enhanced.dim(0), ni = enhanced.dim(1);
  if (static_cast<int64_t>(instances.size()) != ns * ni) {
    throw std::invalid_argument(
        "export_relations: " + std::to_string(instances.size()) +
        " instances for " + std::to_string(ns * ni) + " graph nodes");
  }
  if (!slice_ids.empty() && static_cast<int64_t>(slice_ids.size()) != ns) {
    throw std::invalid_argument("export_relations: slice id count mismatch");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kRelationHeader << "\n";
  char buf[512];
  for (const RelationRecord& r : records) {
    const RelationInstance& a = instances[r.slice * ni + r.i];
    const RelationInstance& b = instances[r.slice * ni + r.j];
    const int64_t sid = slice_ids.empty() ? r.slice : slice_ids[r.slice];
    std::snprintf(buf, sizeof(buf),
                  "%lld %lld %lld %.9g %.6f %.3f %.3f %.3f %.3f %.6f %.3f %.3f "
                  "%.3f %.3f %.6f\n",
                  static_cast<long long>(sid), static_cast<long long>(r.i),
                  static_cast<long long>(r.j), r.raw_weight, r.opacity,
                  a.box.x1, a.box.y1, a.box.x2, a.box.y2, a.score, b.box.x1,
                  b.box.y1, b.box.x2, b.box.y2, b.score);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace fsd
