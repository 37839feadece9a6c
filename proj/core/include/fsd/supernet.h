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

#ifndef FSD_SUPERNET_H_
#define FSD_SUPERNET_H_

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsd/candidate_ops.h"
#include "fsd/layers.h"
#include "fsd/tensor.h"

namespace fsd {

// DARTS-style cell topology: node j takes one candidate edge from each cell
// input and from every earlier node; the cell output concatenates all
// intermediate nodes along channels.
struct CellSpec {
  int num_nodes = 4;
  int num_inputs = 2;
  OpSpace space = OpSpace::kBackbone;
  // Restricts the candidates to a subset of the space (in space order);
  // empty means the whole space.
  std::vector<OpKind> ops;

  std::vector<OpKind> Ops() const;

  struct Edge {
    int node;
    int from;  // < num_inputs: a cell input; otherwise node (from - inputs)
  };
  int NumEdges() const;
  // Node-major, then predecessor order; the position is the edge id.
  std::vector<Edge> Edges() const;
};

// Per-edge logits over the candidate ops, stored as one (edges, ops) tensor
// so the optimizer sees a single architecture parameter.
struct ArchParams {
  OpSpace space = OpSpace::kBackbone;
  int num_nodes = 0;
  std::vector<OpKind> ops;
  Tensor logits;

  int NumEdges() const { return static_cast<int>(logits.dim(0)); }
  std::span<const double> Row(int edge) const;
};

// logits = U(-noise, noise), seeded.
ArchParams InitAlpha(const CellSpec& spec, double noise, uint64_t seed);

// sum_k softmax(logits)_k * ops[k](x). `logits` has shape (K).
Tensor MixedForward(const Tensor& x, const Tensor& logits,
                    std::span<const OpInstance> ops);

struct GenotypeEdge {
  int from;
  OpKind op;

  bool operator==(const GenotypeEdge&) const = default;
};

// Two retained (predecessor, op) pairs per intermediate node.
struct Genotype {
  OpSpace space = OpSpace::kBackbone;
  std::vector<std::array<GenotypeEdge, 2>> nodes;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  bool operator==(const Genotype&) const = default;
};

// Per edge the strongest non-none op; per node the two strongest edges.
// Ties go to the lower op index, then the lower predecessor.
Genotype DeriveGenotype(const ArchParams& alpha);
inline Genotype DeriveGenotype(const ArchParams& alpha, const CellSpec&) {
  return DeriveGenotype(alpha);
}

// "space=<name> nodes=<n>" header, then "node=<j> from=<i> op=<kind>" lines.
std::string FormatGenotype(const Genotype& genotype);
Genotype ParseGenotype(std::string_view text);
void SaveGenotype(const std::filesystem::path& path, const Genotype& g);
Genotype LoadGenotype(const std::filesystem::path& path);

// Tab-separated "edge op logit" rows after a "# space=<name> nodes=<n>"
// comment and a column header; logits printed round-trip exact.
std::string FormatAlphaTsv(const ArchParams& alpha);
ArchParams ParseAlphaTsv(std::string_view text);
void SaveAlphaTsv(const std::filesystem::path& path, const ArchParams& alpha);
ArchParams LoadAlphaTsv(const std::filesystem::path& path);

// Random genotype (uniform non-none ops on uniformly drawn predecessor
// pairs); the baseline architecture for search-signal comparisons.
Genotype RandomGenotype(OpSpace space, int num_nodes, uint64_t seed);

// Copies the values of `src` into `dst` pairwise; shapes must agree.
void CopyTensorData(const std::vector<NamedTensor>& src,
                    const std::vector<NamedTensor>& dst);

class Cell {
 public:
  int num_nodes() const { return num_nodes_; }
  int64_t channels() const { return channels_; }

  virtual ~Cell() = default;
  // (B, C, H, W) x 2 -> (B, nodes * C, H, W).
  virtual Tensor NodesConcat(const Tensor& x_prev_prev,
                             const Tensor& x_prev) const = 0;
  // Concat followed by the 1x1 conv-norm-relu projection back to C.
  Tensor Forward(const Tensor& x_prev_prev, const Tensor& x_prev) const;
  // Appends the projection parameters; subclasses add their ops first.
  virtual void AppendParams(const std::string& prefix,
                            std::vector<NamedTensor>& out) const;

 protected:
  Cell(int num_nodes, int64_t channels, uint64_t seed);
  static void CheckInputs(const Tensor& a, const Tensor& b, int64_t channels);
  void CopyProjectionFrom(const Cell& other);

  int num_nodes_;
  int64_t channels_;
  ConvNormRelu projection_;
};

// Supernet cell: every edge mixes all ops of the space under shared logits.
class MixedCell : public Cell {
 public:
  // `alpha.logits` is shared, not copied: every cell built from the same
  // ArchParams trains one set of logits.
  MixedCell(const CellSpec& spec, int64_t channels, const ArchParams& alpha,
            uint64_t seed);

  Tensor NodesConcat(const Tensor& x_prev_prev,
                     const Tensor& x_prev) const override;
  void AppendParams(const std::string& prefix,
                    std::vector<NamedTensor>& out) const override;

  const OpInstance& EdgeOp(int edge, OpKind kind) const;

 private:
  CellSpec spec_;
  Tensor alpha_;
  std::vector<std::vector<OpInstance>> edge_ops_;
};

// Cell instantiated from a derived genotype.
class DiscreteCell : public Cell {
 public:
  DiscreteCell(const Genotype& genotype, int64_t channels, uint64_t seed);

  const Genotype& genotype() const { return genotype_; }

  // Copies the weights of the retained (edge, op) pairs and the projection
  // from a trained supernet cell of the same width and node count.
  void InheritFrom(const MixedCell& supernet);

  Tensor NodesConcat(const Tensor& x_prev_prev,
                     const Tensor& x_prev) const override;
  void AppendParams(const std::string& prefix,
                    std::vector<NamedTensor>& out) const override;

 private:
  Genotype genotype_;
  std::vector<std::array<OpInstance, 2>> node_ops_;
};

}  // namespace fsd

#endif  // FSD_SUPERNET_H_
