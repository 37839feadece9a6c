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

#include "fsd/supernet.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fsd/ops.h"
#include "fsd/rng.h"

namespace fsd {
namespace {

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::string> SplitLines(std::string_view text) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

// Parses "key=value" tokens of one line into a map.
std::map<std::string, std::string> KeyValues(const std::string& line,
                                             int line_no) {
  std::map<std::string, std::string> kv;
  std::istringstream is(line);
  std::string token;
  while (is >> token) {
    const size_t eq = token.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("genotype line " + std::to_string(line_no) +
                                  ": malformed token '" + token + "'");
    }
    kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return kv;
}

int ParseInt(const std::string& s, const std::string& what) {
  size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw std::invalid_argument("invalid " + what + " '" + s + "'");
  }
  return v;
}

int EdgesForNodes(int num_nodes, int num_inputs) {
  return num_nodes * num_inputs + num_nodes * (num_nodes - 1) / 2;
}

int EdgeIndex(int node, int from, int num_inputs) {
  return node * num_inputs + node * (node - 1) / 2 + from;
}

std::vector<double> SoftmaxRow(std::span<const double> row) {
  const double m = *std::max_element(row.begin(), row.end());
  std::vector<double> p(row.size());
  double z = 0.0;
  for (size_t k = 0; k < row.size(); ++k) z += (p[k] = std::exp(row[k] - m));
  for (double& v : p) v /= z;
  return p;
}

}  // namespace

void CopyTensorData(const std::vector<NamedTensor>& src,
                    const std::vector<NamedTensor>& dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument(
        "copy_tensor_data: " + std::to_string(src.size()) + " sources for " +
        std::to_string(dst.size()) + " targets");
  }
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].second.shape() != dst[i].second.shape()) {
      throw std::invalid_argument(
          "copy_tensor_data: shape mismatch for '" + dst[i].first +
          "': " + ShapeToString(src[i].second.shape()) + " vs " +
          ShapeToString(dst[i].second.shape()));
    }
    Tensor target = dst[i].second;
    const auto v = src[i].second.data();
    std::copy(v.begin(), v.end(), target.mutable_data().begin());
  }
}

std::vector<OpKind> CellSpec::Ops() const {
  if (ops.empty()) {
    const auto all = SpaceOps(space);
    return {all.begin(), all.end()};
  }
  for (OpKind k : ops) {
    if (SpaceIndex(space, k) < 0) {
      throw std::invalid_argument("cell spec: op '" + std::string(OpName(k)) +
                                  "' is not in the " +
                                  std::string(SpaceName(space)) + " space");
    }
  }
  return ops;
}

int CellSpec::NumEdges() const { return EdgesForNodes(num_nodes, num_inputs); }

std::vector<CellSpec::Edge> CellSpec::Edges() const {
  std::vector<Edge> edges;
  edges.reserve(NumEdges());
  for (int j = 0; j < num_nodes; ++j) {
    for (int i = 0; i < num_inputs + j; ++i) edges.push_back({j, i});
  }
  return edges;
}

std::span<const double> ArchParams::Row(int edge) const {
  const int64_t k = logits.dim(1);
  return logits.data().subspan(edge * k, k);
}

ArchParams InitAlpha(const CellSpec& spec, double noise, uint64_t seed) {
  if (noise < 0.0) throw std::invalid_argument("init_alpha: noise < 0");
  if (spec.num_nodes < 1 || spec.num_inputs != 2) {
    throw std::invalid_argument("init_alpha: need >= 1 node and 2 inputs");
  }
  ArchParams a;
  a.space = spec.space;
  a.num_nodes = spec.num_nodes;
  a.ops = spec.Ops();
  const int64_t e = spec.NumEdges();
  const int64_t k = static_cast<int64_t>(a.ops.size());
  std::vector<double> v(e * k, 0.0);
  SplitMix64 rng(seed);
  if (noise > 0.0) {
    for (double& x : v) x = rng.Uniform(-noise, noise);
  }
  a.logits = Tensor({e, k}, std::move(v), true);
  return a;
}

Tensor MixedForward(const Tensor& x, const Tensor& logits,
                    std::span<const OpInstance> ops) {
  if (logits.numel() != static_cast<int64_t>(ops.size())) {
    throw std::invalid_argument(
        "mixed_forward: " + std::to_string(logits.numel()) + " logits for " +
        std::to_string(ops.size()) + " ops");
  }
  const Tensor weights = Softmax(Reshape(logits, {logits.numel()}), 0);
  std::vector<Tensor> outputs;
  std::vector<int64_t> kept;
  for (size_t k = 0; k < ops.size(); ++k) {
    if (ops[k].kind() == OpKind::kNone) continue;
    outputs.push_back(ops[k].Apply(x));
    kept.push_back(static_cast<int64_t>(k));
  }
  if (outputs.empty()) return Tensor::Zeros(x.shape());
  return WeightedSum(outputs, IndexSelect(weights, kept));
}

Genotype DeriveGenotype(const ArchParams& alpha) {
  const int num_edges = EdgesForNodes(alpha.num_nodes, 2);
  if (alpha.logits.ndim() != 2 || alpha.logits.dim(0) != num_edges ||
      alpha.logits.dim(1) != static_cast<int64_t>(alpha.ops.size())) {
    throw std::invalid_argument("derive_genotype: logits shape " +
                                ShapeToString(alpha.logits.shape()) +
                                " does not match the cell");
  }
  struct Choice {
    int from;
    OpKind op;
    double weight;
  };
  Genotype g;
  g.space = alpha.space;
  for (int j = 0; j < alpha.num_nodes; ++j) {
    std::vector<Choice> choices;
    for (int i = 0; i < 2 + j; ++i) {
      const auto p = SoftmaxRow(alpha.Row(EdgeIndex(j, i, 2)));
      int best = -1;
      for (size_t k = 0; k < p.size(); ++k) {
        if (alpha.ops[k] == OpKind::kNone) continue;
        if (best < 0 || p[k] > p[best]) best = static_cast<int>(k);
      }
      if (best < 0) {
        throw std::invalid_argument("derive_genotype: no non-none candidate");
      }
      choices.push_back({i, alpha.ops[best], p[best]});
    }
    std::stable_sort(
        choices.begin(), choices.end(),
        [](const Choice& a, const Choice& b) { return a.weight > b.weight; });
    std::array<GenotypeEdge, 2> pair = {
        GenotypeEdge{choices[0].from, choices[0].op},
        GenotypeEdge{choices[1].from, choices[1].op}};
    if (pair[1].from < pair[0].from) std::swap(pair[0], pair[1]);
    g.nodes.push_back(pair);
  }
  return g;
}

std::string FormatGenotype(const Genotype& g) {
  std::ostringstream os;
  os << "space=" << SpaceName(g.space) << " nodes=" << g.num_nodes() << "\n";
  for (int j = 0; j < g.num_nodes(); ++j) {
    for (const GenotypeEdge& e : g.nodes[j]) {
      os << "node=" << j << " from=" << e.from << " op=" << OpName(e.op)
         << "\n";
    }
  }
  return os.str();
}

Genotype ParseGenotype(std::string_view text) {
  const auto lines = SplitLines(text);
  Genotype g;
  int declared = -1;
  std::vector<std::vector<GenotypeEdge>> pending;
  int line_no = 0;
  for (const std::string& line : lines) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto kv = KeyValues(line, line_no);
    if (declared < 0) {
      if (!kv.count("space") || !kv.count("nodes")) {
        throw std::invalid_argument(
            "genotype: header must declare space= and nodes=");
      }
      const auto space = ParseSpaceName(kv["space"]);
      if (!space) {
        throw std::invalid_argument("genotype: unknown space '" + kv["space"] +
                                    "'");
      }
      g.space = *space;
      declared = ParseInt(kv["nodes"], "node count");
      if (declared < 1) throw std::invalid_argument("genotype: nodes < 1");
      pending.assign(declared, {});
      continue;
    }
    if (!kv.count("node") || !kv.count("from") || !kv.count("op")) {
      throw std::invalid_argument("genotype line " + std::to_string(line_no) +
                                  ": expected node=, from=, op=");
    }
    const int node = ParseInt(kv["node"], "node");
    const int from = ParseInt(kv["from"], "from");
    const auto op = ParseOpName(kv["op"]);
    if (node < 0 || node >= declared) {
      throw std::invalid_argument("genotype line " + std::to_string(line_no) +
                                  ": node out of range");
    }
    if (from < 0 || from >= 2 + node) {
      throw std::invalid_argument("genotype line " + std::to_string(line_no) +
                                  ": predecessor out of range");
    }
    if (!op || *op == OpKind::kNone || SpaceIndex(g.space, *op) < 0) {
      throw std::invalid_argument("genotype line " + std::to_string(line_no) +
                                  ": op '" + kv["op"] +
                                  "' is not a non-none op of the space");
    }
    pending[node].push_back({from, *op});
  }
  if (declared < 0) throw std::invalid_argument("genotype: missing header");
  for (int j = 0; j < declared; ++j) {
    if (pending[j].size() != 2) {
      throw std::invalid_argument("genotype: node " + std::to_string(j) +
                                  " has " + std::to_string(pending[j].size()) +
                                  " records, expected 2");
    }
    g.nodes.push_back({pending[j][0], pending[j][1]});
  }
  return g;
}

void SaveGenotype(const std::filesystem::path& path, const Genotype& g) {
  WriteFile(path, FormatGenotype(g));
}

Genotype LoadGenotype(const std::filesystem::path& path) {
  return ParseGenotype(ReadFile(path));
}

std::string FormatAlphaTsv(const ArchParams& alpha) {
  std::ostringstream os;
  os << "# space=" << SpaceName(alpha.space) << " nodes=" << alpha.num_nodes
     << "\nedge\top\tlogit\n";
  char buf[64];
  for (int e = 0; e < alpha.NumEdges(); ++e) {
    const auto row = alpha.Row(e);
    for (size_t k = 0; k < row.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[k]);
      os << e << "\t" << OpName(alpha.ops[k]) << "\t" << buf << "\n";
    }
  }
  return os.str();
}

ArchParams ParseAlphaTsv(std::string_view text) {
  const auto lines = SplitLines(text);
  ArchParams a;
  bool header = false;
  std::vector<std::vector<std::pair<OpKind, double>>> rows;
  int line_no = 0;
  for (const std::string& line : lines) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto kv = KeyValues(line.substr(1), line_no);
      const auto space = ParseSpaceName(kv["space"]);
      if (!space) throw std::invalid_argument("alpha tsv: bad space header");
      a.space = *space;
      a.num_nodes = ParseInt(kv["nodes"], "node count");
      header = true;
      continue;
    }
    if (line.rfind("edge\t", 0) == 0) continue;
    std::istringstream is(line);
    std::string edge_s, op_s, logit_s;
    if (!std::getline(is, edge_s, '\t') || !std::getline(is, op_s, '\t') ||
        !std::getline(is, logit_s)) {
      throw std::invalid_argument("alpha tsv line " + std::to_string(line_no) +
                                  ": expected 3 columns");
    }
    const int edge = ParseInt(edge_s, "edge id");
    const auto op = ParseOpName(op_s);
    if (!op) {
      throw std::invalid_argument("alpha tsv line " + std::to_string(line_no) +
                                  ": unknown op '" + op_s + "'");
    }
    char* end = nullptr;
    const double logit = std::strtod(logit_s.c_str(), &end);
    if (end == logit_s.c_str() || *end != '\0' || !std::isfinite(logit)) {
      throw std::invalid_argument("alpha tsv line " + std::to_string(line_no) +
                                  ": invalid logit '" + logit_s + "'");
    }
    if (edge < 0) throw std::invalid_argument("alpha tsv: negative edge id");
    if (edge >= static_cast<int>(rows.size())) rows.resize(edge + 1);
    rows[edge].emplace_back(*op, logit);
  }
  if (!header) throw std::invalid_argument("alpha tsv: missing header");
  if (static_cast<int>(rows.size()) != EdgesForNodes(a.num_nodes, 2) ||
      rows.empty()) {
    throw std::invalid_argument("alpha tsv: edge count does not match nodes=" +
                                std::to_string(a.num_nodes));
  }
  for (const auto& [op, _] : rows[0]) a.ops.push_back(op);
  std::vector<double> v;
  for (size_t e = 0; e < rows.size(); ++e) {
    if (rows[e].size() != a.ops.size()) {
      throw std::invalid_argument("alpha tsv: edge " + std::to_string(e) +
                                  " has a different op list");
    }
    for (size_t k = 0; k < rows[e].size(); ++k) {
      if (rows[e][k].first != a.ops[k]) {
        throw std::invalid_argument("alpha tsv: edge " + std::to_string(e) +
                                    " has a different op order");
      }
      v.push_back(rows[e][k].second);
    }
  }
  a.logits = Tensor(
      {static_cast<int64_t>(rows.size()), static_cast<int64_t>(a.ops.size())},
      std::move(v), true);
  return a;
}

void SaveAlphaTsv(const std::filesystem::path& path, const ArchParams& alpha) {
  WriteFile(path, FormatAlphaTsv(alpha));
}

ArchParams LoadAlphaTsv(const std::filesystem::path& path) {
  return ParseAlphaTsv(ReadFile(path));
}

Genotype RandomGenotype(OpSpace space, int num_nodes, uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<OpKind> candidates;
  for (OpKind k : SpaceOps(space)) {
    if (k != OpKind::kNone) candidates.push_back(k);
  }
  Genotype g;
  g.space = space;
  for (int j = 0; j < num_nodes; ++j) {
    const int preds = 2 + j;
    int a = static_cast<int>(rng.UniformInt(uint64_t(preds)));
    int b = static_cast<int>(rng.UniformInt(uint64_t(preds - 1)));
    if (b >= a) ++b;
    if (b < a) std::swap(a, b);
    const OpKind op_a = candidates[rng.UniformInt(candidates.size())];
    const OpKind op_b = candidates[rng.UniformInt(candidates.size())];
    g.nodes.push_back({GenotypeEdge{a, op_a}, GenotypeEdge{b, op_b}});
  }
  return g;
}

Cell::Cell(int num_nodes, int64_t channels, uint64_t seed)
    : num_nodes_(num_nodes), channels_(channels) {
  SplitMix64 rng(DeriveSeed(seed, {0x70726f6aULL}));
  projection_ = ConvNormRelu::Make(num_nodes * channels, channels, 1, 1,
                                   Conv2dOptions{}, rng);
}

void Cell::CheckInputs(const Tensor& a, const Tensor& b, int64_t channels) {
  if (a.shape() != b.shape() || a.ndim() != 4 || a.dim(1) != channels) {
    throw std::invalid_argument(
        "cell_forward: inputs " + ShapeToString(a.shape()) + " and " +
        ShapeToString(b.shape()) + " must both be (B, " +
        std::to_string(channels) + ", H, W)");
  }
}

void Cell::CopyProjectionFrom(const Cell& other) {
  std::vector<NamedTensor> src, dst;
  other.projection_.AppendParams("", src);
  projection_.AppendParams("", dst);
  CopyTensorData(src, dst);
}

Tensor Cell::Forward(const Tensor& x_prev_prev, const Tensor& x_prev) const {
  return projection_.Forward(NodesConcat(x_prev_prev, x_prev));
}

void Cell::AppendParams(const std::string& prefix,
                        std::vector<NamedTensor>& out) const {
  projection_.AppendParams(prefix + "proj.", out);
}

MixedCell::MixedCell(const CellSpec& spec, int64_t channels,
                     const ArchParams& alpha, uint64_t seed)
    : Cell(spec.num_nodes, channels, seed), spec_(spec), alpha_(alpha.logits) {
  const auto ops = spec.Ops();
  if (alpha.logits.ndim() != 2 || alpha.logits.dim(0) != spec.NumEdges() ||
      alpha.logits.dim(1) != static_cast<int64_t>(ops.size()) ||
      alpha.ops != ops) {
    throw std::invalid_argument("mixed cell: alpha shape " +
                                ShapeToString(alpha.logits.shape()) +
                                " does not match the cell spec");
  }
  const int num_edges = spec.NumEdges();
  edge_ops_.resize(num_edges);
  for (int e = 0; e < num_edges; ++e) {
    for (size_t k = 0; k < ops.size(); ++k) {
      edge_ops_[e].push_back(
          BuildOp(ops[k], channels, DeriveSeed(seed, {uint64_t(e), k})));
    }
  }
}

Tensor MixedCell::NodesConcat(const Tensor& x_prev_prev,
                              const Tensor& x_prev) const {
  CheckInputs(x_prev_prev, x_prev, channels_);
  std::vector<Tensor> states = {x_prev_prev, x_prev};
  const int64_t k = alpha_.dim(1);
  int e = 0;
  for (int j = 0; j < num_nodes_; ++j) {
    std::vector<Tensor> terms;
    for (int i = 0; i < 2 + j; ++i, ++e) {
      const Tensor row = Reshape(Slice(alpha_, 0, e, 1), {k});
      terms.push_back(MixedForward(states[i], row, edge_ops_[e]));
    }
    states.push_back(AddN(terms));
  }
  return Concat(std::span<const Tensor>(states).subspan(2), 1);
}

void MixedCell::AppendParams(const std::string& prefix,
                             std::vector<NamedTensor>& out) const {
  for (size_t e = 0; e < edge_ops_.size(); ++e) {
    for (const OpInstance& op : edge_ops_[e]) {
      const std::string base = prefix + "edge" + std::to_string(e) + "." +
                               std::string(OpName(op.kind())) + ".";
      for (const auto& [name, t] : op.params())
        out.emplace_back(base + name, t);
    }
  }
  Cell::AppendParams(prefix, out);
}

const OpInstance& MixedCell::EdgeOp(int edge, OpKind kind) const {
  if (edge < 0 || edge >= static_cast<int>(edge_ops_.size())) {
    throw std::out_of_range("mixed cell: edge " + std::to_string(edge) +
                            " out of range");
  }
  for (const OpInstance& op : edge_ops_[edge]) {
    if (op.kind() == kind) return op;
  }
  throw std::invalid_argument("mixed cell: op '" + std::string(OpName(kind)) +
                              "' is not a candidate");
}

void DiscreteCell::InheritFrom(const MixedCell& supernet) {
  if (supernet.num_nodes() != num_nodes_ || supernet.channels() != channels_) {
    throw std::invalid_argument(
        "discrete cell: supernet cell has a different shape");
  }
  for (int j = 0; j < num_nodes_; ++j) {
    for (int s = 0; s < 2; ++s) {
      const GenotypeEdge& ge = genotype_.nodes[j][s];
      const OpInstance& src = supernet.EdgeOp(EdgeIndex(j, ge.from, 2), ge.op);
      CopyTensorData(src.params(), node_ops_[j][s].params());
    }
  }
  CopyProjectionFrom(supernet);
}

DiscreteCell::DiscreteCell(const Genotype& genotype, int64_t channels,
                           uint64_t seed)
    : Cell(genotype.num_nodes(), channels, seed), genotype_(genotype) {
  for (int j = 0; j < genotype.num_nodes(); ++j) {
    std::array<OpInstance, 2> ops;
    for (int s = 0; s < 2; ++s) {
      const GenotypeEdge& ge = genotype.nodes[j][s];
      if (ge.from < 0 || ge.from >= 2 + j || ge.op == OpKind::kNone) {
        throw std::invalid_argument(
            "discrete cell: invalid genotype edge at node " +
            std::to_string(j));
      }
      const uint64_t edge = EdgeIndex(j, ge.from, 2);
      ops[s] = BuildOp(
          ge.op, channels,
          DeriveSeed(seed,
                     {edge, uint64_t(SpaceIndex(genotype.space, ge.op))}));
    }
    node_ops_.push_back(std::move(ops));
  }
}

Tensor DiscreteCell::NodesConcat(const Tensor& x_prev_prev,
                                 const Tensor& x_prev) const {
  CheckInputs(x_prev_prev, x_prev, channels_);
  std::vector<Tensor> states = {x_prev_prev, x_prev};
  for (int j = 0; j < num_nodes_; ++j) {
    const auto& pair = genotype_.nodes[j];
    const Tensor a = node_ops_[j][0].Apply(states[pair[0].from]);
    const Tensor b = node_ops_[j][1].Apply(states[pair[1].from]);
    states.push_back(Add(a, b));
  }
  return Concat(std::span<const Tensor>(states).subspan(2), 1);
}

void DiscreteCell::AppendParams(const std::string& prefix,
                                std::vector<NamedTensor>& out) const {
  for (size_t j = 0; j < node_ops_.size(); ++j) {
    for (int s = 0; s < 2; ++s) {
      const OpInstance& op = node_ops_[j][s];
      const std::string base = prefix + "node" + std::to_string(j) + "." +
                               std::to_string(s) + "." +
                               std::string(OpName(op.kind())) + ".";
      for (const auto& [name, t] : op.params())
        out.emplace_back(base + name, t);
    }
  }
  Cell::AppendParams(prefix, out);
}

}  // namespace fsd
