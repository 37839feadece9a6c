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

// Relational reasoning between the region instances of one slice: a Gram
// adjacency over instance features, a learnable enhancement of that graph,
// and one propagation step whose output is added to the classifier input.

#ifndef FSD_REGION_GRAPH_H_
#define FSD_REGION_GRAPH_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fsd/boxes.h"
#include "fsd/tensor.h"

namespace fsd {

// relu(gain * a + bias), applied to every entry of a relation tensor.
struct ElementwiseMap {
  Tensor gain;  // shape (1)
  Tensor bias;  // shape (1)

  static ElementwiseMap Make(double gain, double bias);
  Tensor Apply(const Tensor& a) const;
};

struct GraphParams {
  ElementwiseMap phi;
  ElementwiseMap psi;
  ElementwiseMap delta;
  Tensor sigma;  // (D, D)

  // Identity maps and sigma = sigma_gain * I.
  static GraphParams Identity(int64_t dim, double sigma_gain = 1.0);
  // Every gain, bias and sigma entry zero: the module adds nothing.
  static GraphParams Zeros(int64_t dim);

  int64_t dim() const { return sigma.dim(0); }
  void AppendParams(const std::string& prefix,
                    std::vector<NamedTensor>& out) const;
};

// (N, D) -> (N_s, N_i, D), slice-major rows.
Tensor ReshapeInstances(const Tensor& features, int64_t n_slices);
// (N_s, N_i, D) -> (N_s * N_i, D).
Tensor FlattenInstances(const Tensor& batch);

// Per slice A = X X^T.
Tensor BuildAdjacency(const Tensor& batch);
// Per slice A_e = phi(A^T) psi(A) delta(A^T).
Tensor Enhance(const Tensor& adjacency, const GraphParams& p);
// Per slice X_e = relu((A_e X) Sigma).
Tensor Propagate(const Tensor& enhanced, const Tensor& batch,
                 const GraphParams& p);
// original + flatten(X_e).
Tensor Fuse(const Tensor& original, const Tensor& propagated);

struct GraphOutput {
  Tensor fused;     // (N, D)
  Tensor enhanced;  // (N_s, N_i, N_i)
};

// Full module over an (N, D) feature block. With `normalize` the adjacency
// is built from L2-normalized rows while propagation uses the raw rows.
// Propagation sees A_e * propagate_scale; `enhanced` is returned unscaled.
GraphOutput ApplyGraph(const Tensor& features, int64_t n_slices,
                       const GraphParams& p, bool normalize,
                       double propagate_scale = 1.0);

struct RelationInstance {
  Box box;
  double score = 0.0;
};

struct RelationRecord {
  int64_t slice = 0;
  int64_t i = 0, j = 0;
  double raw_weight = 0.0;
  double opacity = 0.0;
};

// One record per slice and instance pair i < j with raw_weight = A_e[i, j]
// and opacity = clamp(raw / max raw weight of the slice, 0, 1).
std::vector<RelationRecord> RelationRecords(const Tensor& enhanced);

inline constexpr const char* kRelationHeader =
    "# slice_id i j raw_weight opacity x1_i y1_i x2_i y2_i score_i "
    "x1_j y1_j x2_j y2_j score_j";

// `instances` is slice-major with N_s * N_i entries. `slice_ids` optionally
// renames slices (defaults to 0..N_s-1).
void ExportRelations(const std::filesystem::path& path, const Tensor& enhanced,
                     std::span<const RelationInstance> instances,
                     std::span<const int64_t> slice_ids = {});

}  // namespace fsd

#endif  // FSD_REGION_GRAPH_H_
