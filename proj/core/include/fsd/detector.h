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

// Miniature two-stage detector: fixed stem, stacked backbone cells, an
// anchor-based proposal stage, bilinear ROI extraction and either a fully
// connected or a cell-based head, optionally followed by the region graph.

#ifndef FSD_DETECTOR_H_
#define FSD_DETECTOR_H_

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsd/boxes.h"
#include "fsd/dataset.h"
#include "fsd/layers.h"
#include "fsd/optim.h"
#include "fsd/region_graph.h"
#include "fsd/rng.h"
#include "fsd/supernet.h"
#include "fsd/tensor.h"

namespace fsd {

struct DetectorConfig {
  int64_t in_channels = 1;
  int64_t channels = 16;
  int num_stages = 2;
  int cells_per_stage = 2;
  int bone_nodes = 4;
  int head_nodes = 4;
  int head_cells = 2;
  int num_classes = 1;
  int64_t fc_dim = 1024;
  int64_t roi_size = 7;
  AnchorConfig anchor;

  int rpn_batch_per_image = 64;
  double rpn_pos_fraction = 0.5;
  double rpn_pos_iou = 0.7;
  double rpn_neg_iou = 0.3;
  int rpn_pre_nms_train = 256;
  int rpn_post_nms_train = 32;
  int rpn_pre_nms_test = 256;
  double rpn_nms_iou = 0.7;

  int rois_per_image = 16;
  double roi_fg_fraction = 0.25;
  double head_fg_iou = 0.5;
  bool class_agnostic_reg = true;
  double smooth_l1_beta = 1.0 / 9.0;

  double score_thresh = 0.05;
  double test_nms_iou = 0.5;
  int max_detections = 20;

  bool graph_enabled = true;
  bool graph_normalize = true;
  // Initial sigma = graph_sigma_gain * I. Propagation divides A_e by
  // N_i^3, the largest magnitude of an entry of A^3 times N_i.
  double graph_sigma_gain = 1.0;

  // Pixel stride of the backbone output: 4 * 2^(num_stages - 1).
  int FeatureStride() const { return 4 << (num_stages - 1); }
  // Throws std::invalid_argument on inconsistent settings.
  void Validate() const;
};

// A backbone or head built either from a genotype or as a supernet whose
// cells share the given logits.
struct ArchChoice {
  std::optional<Genotype> genotype;
  std::optional<ArchParams> alpha;

  static ArchChoice Fixed(Genotype g) { return {std::move(g), std::nullopt}; }
  static ArchChoice Supernet(ArchParams a) {
    return {std::nullopt, std::move(a)};
  }
  bool is_supernet() const { return alpha.has_value(); }
};

enum class HeadKind { kFc, kConv };

struct HeadChoice {
  HeadKind kind = HeadKind::kFc;
  ArchChoice arch;  // used by kConv only

  static HeadChoice Fc() { return {}; }
  static HeadChoice Conv(ArchChoice a) {
    return {HeadKind::kConv, std::move(a)};
  }
};

struct ParamBreakdown {
  int64_t backbone = 0;
  int64_t head = 0;
  int64_t rpn = 0;
  int64_t graph = 0;
  int64_t total = 0;
};

// Raw network outputs for a batch. Anchor m of image b is row b * M + m,
// with M = feat_h * feat_w * anchors_per_location in GenerateAnchors order.
struct DetectionOutputs {
  Tensor rpn_objectness;  // (B * M)
  Tensor rpn_deltas;      // (B * M, 4)
  Tensor cls_logits;      // (N, K + 1)
  Tensor box_deltas;      // (N, 4) or (N, 4 * (K + 1))
};

struct DetectionTargets {
  std::vector<int> rpn_labels;  // 1 / 0 / -1 per anchor row
  std::vector<std::array<double, 4>> rpn_deltas;
  std::vector<int> roi_labels;  // class id per ROI row, 0 background
  std::vector<std::array<double, 4>> roi_deltas;
};

struct LossTerms {
  Tensor rpn_cls, rpn_reg, head_cls, head_reg;

  Tensor head() const;
  Tensor total() const;
};

// Cross-entropy on sampled anchors and on every ROI; smooth-L1 on positives
// normalized by the number of sampled anchors / ROIs. Terms with nothing to
// score are exactly 0.
LossTerms DetectionLoss(const DetectionOutputs& outputs,
                        const DetectionTargets& targets, double beta,
                        bool class_agnostic = true);

struct InferenceResult {
  std::vector<Detection> detections;
  // Graph instances of this image (proposal boxes after refinement, best
  // foreground score) and the per-image slice of A_e; empty without graph.
  std::vector<RelationInstance> instances;
  Tensor enhanced;  // (1, N_i, N_i) when the graph is enabled
};

class Detector {
 public:
  Detector(const DetectorConfig& cfg, ArchChoice backbone, HeadChoice head,
           uint64_t seed);

  const DetectorConfig& config() const { return cfg_; }
  DetectorConfig& mutable_config() { return cfg_; }

  // Backbone feature map (B, C, H / stride, W / stride).
  Tensor Features(const Tensor& images) const;

  // Full training forward with sampled targets; `rng` drives anchor and ROI
  // sampling.
  LossTerms Loss(std::span<const DetectionSample* const> batch,
                 SplitMix64& rng) const;
  LossTerms Loss(std::span<const DetectionSample> batch, SplitMix64& rng) const;

  // Detections sorted by descending score.
  std::vector<InferenceResult> Infer(
      std::span<const DetectionSample* const> batch) const;
  InferenceResult Infer(const DetectionSample& sample) const;

  // Head features (N, D) before the graph and the classifier.
  Tensor HeadFeatures(const Tensor& rois) const;
  // Classifier and box outputs from head features of n_slices images.
  std::pair<Tensor, Tensor> Classify(const Tensor& head_features,
                                     int64_t n_slices,
                                     Tensor* enhanced = nullptr) const;

  // Weight groups; trunk = stem, backbone cells, reduction and RPN.
  std::vector<NamedTensor> TrunkParams() const;
  std::vector<NamedTensor> HeadParams() const;
  std::vector<NamedTensor> GraphParamsList() const;
  std::vector<NamedTensor> WeightParams() const;
  std::vector<NamedTensor> ArchParamsList() const;
  ParamGroup WeightGroup() const;
  ParamGroup ArchGroup() const;

  ParamBreakdown CountParams() const;

  // Copies weights from a detector of the same width. Plain layers copy
  // one to one; a genotype cell fed by a supernet cell takes the weights of
  // its retained ops. Throws when the two structures cannot be matched.
  void InheritTrunk(const Detector& source);
  void InheritHead(const Detector& source);

  // Stops gradient flow into the trunk and skips its tape.
  void FreezeTrunk(bool frozen);
  bool trunk_frozen() const { return trunk_frozen_; }

  const std::optional<ArchParams>& bone_alpha() const { return bone_.alpha; }
  const std::optional<ArchParams>& head_alpha() const {
    return head_.arch.alpha;
  }
  GraphParams& graph() { return graph_; }
  const GraphParams& graph() const { return graph_; }

 private:
  struct RpnOut {
    Tensor objectness;  // (B, M)
    Tensor deltas;      // (B, M, 4)
  };
  RpnOut RunRpn(const Tensor& features) const;
  // Top proposals per image (no gradient), padded cyclically to `count`
  // when `pad` is set.
  std::vector<std::vector<Box>> Propose(const RpnOut& rpn,
                                        std::span<const Box> anchors,
                                        double img_w, double img_h, int pre_nms,
                                        int post_nms, bool pad) const;
  Tensor ExtractRois(const Tensor& features,
                     const std::vector<std::vector<Box>>& rois) const;

  DetectorConfig cfg_;
  ArchChoice bone_;
  HeadChoice head_;
  bool trunk_frozen_ = false;

  std::vector<ConvNormRelu> stem_;
  std::vector<std::vector<std::unique_ptr<Cell>>> stages_;
  std::vector<ConvNormRelu> reductions_;

  Tensor rpn_conv_w_, rpn_conv_b_;
  Tensor rpn_obj_w_, rpn_obj_b_;
  Tensor rpn_delta_w_, rpn_delta_b_;

  // FC head.
  Linear fc1_, fc2_;
  // Conv head.
  std::vector<std::unique_ptr<Cell>> head_cells_;
  Linear cls_, box_;

  GraphParams graph_;
  BoxCoder rpn_coder_;
  BoxCoder head_coder_;
};

// Samples `count` indices: up to fraction * count drawn from `pos`, the rest
// from `neg` (falling back to `pos`). Draws are without replacement while a
// pool lasts and with replacement after it runs dry; returns fewer only when
// both pools are empty.
std::vector<int> SampleIndices(std::span<const int> pos,
                               std::span<const int> neg, int count,
                               double fraction, bool fill, SplitMix64& rng);

}  // namespace fsd

#endif  // FSD_DETECTOR_H_
