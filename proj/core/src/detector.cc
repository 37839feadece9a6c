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

#include "fsd/detector.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fsd/ops.h"

namespace fsd {
namespace {

enum SeedTag : uint64_t {
  kTagStem = 1,
  kTagCell = 2,
  kTagReduce = 3,
  kTagRpn = 4,
  kTagHead = 5,
  kTagHeadCell = 6,
  kTagClassifier = 7,
};

Tensor AddChannelBias(const Tensor& x, const Tensor& bias) {
  return Add(x, bias);
}

// Indices sorted by descending score; ties keep the lower index first.
std::vector<int> RankByScore(std::span<const double> scores, int limit) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  const auto cmp = [&](int a, int b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  if (limit > 0 && limit < static_cast<int>(order.size())) {
    std::partial_sort(order.begin(), order.begin() + limit, order.end(), cmp);
    order.resize(limit);
  } else {
    std::sort(order.begin(), order.end(), cmp);
  }
  return order;
}

void CheckGenotypeSpace(const Genotype& g, OpSpace space, const char* what) {
  if (g.space != space) {
    throw std::invalid_argument(std::string(what) + ": genotype op space is '" +
                                std::string(SpaceName(g.space)) +
                                "', expected '" +
                                std::string(SpaceName(space)) + "'");
  }
}

std::unique_ptr<Cell> MakeCell(const ArchChoice& arch, OpSpace space,
                               int64_t channels, uint64_t seed,
                               const char* what) {
  if (arch.alpha.has_value() == arch.genotype.has_value()) {
    throw std::invalid_argument(std::string(what) +
                                ": need exactly one of genotype or alpha");
  }
  if (arch.alpha) {
    if (arch.alpha->space != space) {
      throw std::invalid_argument(std::string(what) +
                                  ": alpha belongs to the wrong op space");
    }
    CellSpec spec;
    spec.num_nodes = arch.alpha->num_nodes;
    spec.space = space;
    spec.ops = arch.alpha->ops;
    return std::make_unique<MixedCell>(spec, channels, *arch.alpha, seed);
  }
  CheckGenotypeSpace(*arch.genotype, space, what);
  return std::make_unique<DiscreteCell>(*arch.genotype, channels, seed);
}

Tensor RunCells(const std::vector<std::unique_ptr<Cell>>& cells, Tensor x) {
  Tensor s0 = x, s1 = x;
  for (const auto& cell : cells) {
    Tensor out = cell->Forward(s0, s1);
    s0 = s1;
    s1 = out;
  }
  return s1;
}

Tensor RowsTensor(const std::vector<std::array<double, 4>>& rows,
                  std::span<const int64_t> pick) {
  std::vector<double> v;
  v.reserve(pick.size() * 4);
  for (int64_t i : pick) v.insert(v.end(), rows[i].begin(), rows[i].end());
  return Tensor({static_cast<int64_t>(pick.size()), 4}, std::move(v));
}

}  // namespace

void DetectorConfig::Validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("detector config: " + msg);
  };
  if (in_channels < 1 || channels < 1) fail("channel counts must be positive");
  if (num_stages < 1 || num_stages > 4) fail("num_stages must be in [1, 4]");
  if (cells_per_stage < 0 || head_cells < 1) fail("cell counts out of range");
  if (bone_nodes < 1 || head_nodes < 1) fail("node counts must be positive");
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (fc_dim < 1 || roi_size < 1) fail("fc_dim and roi_size must be positive");
  if (anchor.ratios.empty() || anchor.scales.empty()) fail("empty anchor set");
  if (anchor.stride != FeatureStride()) {
    fail("anchor.stride " + std::to_string(anchor.stride) +
         " differs from the feature stride " + std::to_string(FeatureStride()));
  }
  if (rpn_batch_per_image < 1 || rois_per_image < 1) fail("empty sample sizes");
  if (rpn_pre_nms_train < 1 || rpn_post_nms_train < 1 || rpn_pre_nms_test < 1) {
    fail("proposal counts must be positive");
  }
  if (!(rpn_neg_iou <= rpn_pos_iou)) fail("rpn IoU thresholds out of order");
  if (smooth_l1_beta < 0) fail("smooth_l1_beta must be >= 0");
  if (!(graph_sigma_gain >= 0)) fail("graph_sigma_gain must be >= 0");
}

Tensor LossTerms::head() const { return Add(head_cls, head_reg); }

Tensor LossTerms::total() const { return Add(Add(rpn_cls, rpn_reg), head()); }

LossTerms DetectionLoss(const DetectionOutputs& out, const DetectionTargets& t,
                        double beta, bool class_agnostic) {
  LossTerms terms;
  terms.rpn_cls =
      BinaryCrossEntropyWithLogits(out.rpn_objectness, t.rpn_labels);
  std::vector<int64_t> pos;
  int64_t sampled = 0;
  for (size_t i = 0; i < t.rpn_labels.size(); ++i) {
    if (t.rpn_labels[i] != -1) ++sampled;
    if (t.rpn_labels[i] == 1) pos.push_back(static_cast<int64_t>(i));
  }
  if (pos.empty()) {
    terms.rpn_reg = Tensor::Scalar(0.0);
  } else {
    terms.rpn_reg = Scale(SmoothL1(IndexSelect(out.rpn_deltas, pos),
                                   RowsTensor(t.rpn_deltas, pos), beta),
                          1.0 / static_cast<double>(sampled));
  }

  terms.head_cls = CrossEntropyWithLogits(out.cls_logits, t.roi_labels);
  std::vector<int64_t> fg, rows;
  const int64_t n = static_cast<int64_t>(t.roi_labels.size());
  for (int64_t i = 0; i < n; ++i) {
    if (t.roi_labels[i] > 0) fg.push_back(i);
  }
  if (fg.empty()) {
    terms.head_reg = Tensor::Scalar(0.0);
  } else {
    Tensor pred;
    if (class_agnostic) {
      pred = IndexSelect(out.box_deltas, fg);
    } else {
      const int64_t k1 = out.box_deltas.dim(1) / 4;
      for (int64_t i : fg) rows.push_back(i * k1 + t.roi_labels[i]);
      pred = IndexSelect(Reshape(out.box_deltas, {n * k1, 4}), rows);
    }
    terms.head_reg = Scale(SmoothL1(pred, RowsTensor(t.roi_deltas, fg), beta),
                           1.0 / static_cast<double>(n));
  }
  return terms;
}

std::vector<int> SampleIndices(std::span<const int> pos,
                               std::span<const int> neg, int count,
                               double fraction, bool fill, SplitMix64& rng) {
  auto draw = [&rng](std::span<const int> pool, int k, bool replace,
                     std::vector<int>& out) {
    if (pool.empty() || k <= 0) return;
    std::vector<int> v(pool.begin(), pool.end());
    rng.Shuffle(v);
    const int direct = std::min<int>(k, static_cast<int>(v.size()));
    out.insert(out.end(), v.begin(), v.begin() + direct);
    if (!replace) return;
    for (int i = direct; i < k; ++i) {
      out.push_back(v[rng.UniformInt(uint64_t(v.size()))]);
    }
  };
  std::vector<int> out;
  int want_pos = static_cast<int>(std::floor(fraction * count + 1e-9));
  want_pos = std::min<int>(want_pos, static_cast<int>(pos.size()));
  draw(pos, want_pos, false, out);
  int rest = count - want_pos;
  if (!neg.empty()) {
    draw(neg, rest, fill, out);
  } else if (fill) {
    draw(pos, rest, true, out);
  }
  return out;
}

Detector::Detector(const DetectorConfig& cfg, ArchChoice backbone,
                   HeadChoice head, uint64_t seed)
    : cfg_(cfg), bone_(std::move(backbone)), head_(std::move(head)) {
  cfg_.Validate();
  const int64_t c = cfg_.channels;
  {
    SplitMix64 rng(DeriveSeed(seed, {kTagStem}));
    stem_.push_back(ConvNormRelu::Make(cfg_.in_channels, c, 3, 3,
                                       Conv2dOptions::Square(2, 1), rng));
    stem_.push_back(
        ConvNormRelu::Make(c, c, 3, 3, Conv2dOptions::Square(2, 1), rng));
  }
  if (bone_.genotype)
    CheckGenotypeSpace(*bone_.genotype, OpSpace::kBackbone, "backbone");
  stages_.resize(cfg_.num_stages);
  for (int s = 0; s < cfg_.num_stages; ++s) {
    for (int k = 0; k < cfg_.cells_per_stage; ++k) {
      stages_[s].push_back(MakeCell(
          bone_, OpSpace::kBackbone, c,
          DeriveSeed(seed, {kTagCell, uint64_t(s), uint64_t(k)}), "backbone"));
    }
    if (s + 1 < cfg_.num_stages) {
      SplitMix64 rng(DeriveSeed(seed, {kTagReduce, uint64_t(s)}));
      reductions_.push_back(
          ConvNormRelu::Make(c, c, 3, 3, Conv2dOptions::Square(2, 1), rng));
    }
  }

  const int64_t a = cfg_.anchor.PerLocation();
  {
    SplitMix64 rng(DeriveSeed(seed, {kTagRpn}));
    rpn_conv_w_ = HeNormal({c, c, 3, 3}, c * 9, rng);
    rpn_conv_b_ = Tensor::Zeros({1, c, 1, 1}, true);
    rpn_obj_w_ = NormalInit({a, c, 1, 1}, 0.01, rng);
    rpn_obj_b_ = Tensor::Zeros({1, a, 1, 1}, true);
    rpn_delta_w_ = NormalInit({4 * a, c, 1, 1}, 0.01, rng);
    rpn_delta_b_ = Tensor::Zeros({1, 4 * a, 1, 1}, true);
  }

  int64_t feat_dim = 0;
  if (head_.kind == HeadKind::kFc) {
    SplitMix64 rng(DeriveSeed(seed, {kTagHead}));
    const int64_t in = c * cfg_.roi_size * cfg_.roi_size;
    fc1_ = Linear::Make(in, cfg_.fc_dim, std::sqrt(2.0 / in), rng);
    fc2_ = Linear::Make(cfg_.fc_dim, cfg_.fc_dim, std::sqrt(2.0 / cfg_.fc_dim),
                        rng);
    feat_dim = cfg_.fc_dim;
  } else {
    if (head_.arch.genotype) {
      CheckGenotypeSpace(*head_.arch.genotype, OpSpace::kHead, "head");
    }
    for (int k = 0; k < cfg_.head_cells; ++k) {
      head_cells_.push_back(
          MakeCell(head_.arch, OpSpace::kHead, c,
                   DeriveSeed(seed, {kTagHeadCell, uint64_t(k)}), "head"));
    }
    feat_dim = c;
  }
  {
    SplitMix64 rng(DeriveSeed(seed, {kTagClassifier}));
    const int64_t k1 = cfg_.num_classes + 1;
    cls_ = Linear::Make(feat_dim, k1, 0.01, rng);
    box_ = Linear::Make(feat_dim, cfg_.class_agnostic_reg ? 4 : 4 * k1, 0.001,
                        rng);
  }
  graph_ = GraphParams::Identity(feat_dim, cfg_.graph_sigma_gain);
  head_coder_.weights = {10.0, 10.0, 5.0, 5.0};
}

Tensor Detector::Features(const Tensor& images) const {
  std::optional<NoGradGuard> guard;
  if (trunk_frozen_) guard.emplace();
  if (images.ndim() != 4 || images.dim(1) != cfg_.in_channels) {
    throw std::invalid_argument(
        "detector: images must be (B, " + std::to_string(cfg_.in_channels) +
        ", H, W), got " + ShapeToString(images.shape()));
  }
  Tensor x = images;
  for (const ConvNormRelu& block : stem_) x = block.Forward(x);
  for (size_t s = 0; s < stages_.size(); ++s) {
    x = RunCells(stages_[s], x);
    if (s < reductions_.size()) x = reductions_[s].Forward(x);
  }
  return x;
}

Detector::RpnOut Detector::RunRpn(const Tensor& features) const {
  std::optional<NoGradGuard> guard;
  if (trunk_frozen_) guard.emplace();
  const int64_t b = features.dim(0), h = features.dim(2), w = features.dim(3);
  const int64_t a = cfg_.anchor.PerLocation();
  const Tensor hidden = Relu(AddChannelBias(
      Conv2d(features, rpn_conv_w_, Conv2dOptions::Square(1, 1)), rpn_conv_b_));
  Tensor obj = AddChannelBias(Conv2d(hidden, rpn_obj_w_), rpn_obj_b_);
  obj = Transpose(Transpose(obj, 1, 2), 2, 3);  // (B, h, w, A)
  Tensor del = AddChannelBias(Conv2d(hidden, rpn_delta_w_), rpn_delta_b_);
  del = Transpose(Reshape(del, {b, 4 * a, h * w}), 1, 2);  // (B, hw, 4A)
  return {Reshape(obj, {b, h * w * a}), Reshape(del, {b, h * w * a, 4})};
}

std::vector<std::vector<Box>> Detector::Propose(const RpnOut& rpn,
                                                std::span<const Box> anchors,
                                                double img_w, double img_h,
                                                int pre_nms, int post_nms,
                                                bool pad) const {
  const int64_t b = rpn.objectness.dim(0), m = rpn.objectness.dim(1);
  const auto obj = rpn.objectness.data();
  const auto del = rpn.deltas.data();
  std::vector<std::vector<Box>> out(b);
  for (int64_t i = 0; i < b; ++i) {
    const auto scores = obj.subspan(i * m, m);
    const auto order = RankByScore(scores, pre_nms);
    std::vector<Box> boxes;
    std::vector<double> kept_scores;
    for (int idx : order) {
      const Box d = ClipBox(
          rpn_coder_.Decode(anchors[idx], del.subspan((i * m + idx) * 4, 4)),
          img_w, img_h);
      if (d.width() < 1.0 || d.height() < 1.0) continue;
      boxes.push_back(d);
      kept_scores.push_back(scores[idx]);
    }
    for (int k : Nms(boxes, kept_scores, cfg_.rpn_nms_iou, post_nms)) {
      out[i].push_back(boxes[k]);
    }
    if (pad) {
      if (out[i].empty()) out[i].push_back({0, 0, img_w, img_h});
      const size_t have = out[i].size();
      for (size_t k = have; k < static_cast<size_t>(post_nms); ++k) {
        out[i].push_back(out[i][k % have]);
      }
    }
  }
  return out;
}

Tensor Detector::ExtractRois(const Tensor& features,
                             const std::vector<std::vector<Box>>& rois) const {
  const double s = cfg_.FeatureStride();
  std::vector<FeatureBox> boxes;
  for (size_t b = 0; b < rois.size(); ++b) {
    for (const Box& r : rois[b]) {
      boxes.push_back(
          {r.x1 / s, r.y1 / s, r.x2 / s, r.y2 / s, static_cast<int64_t>(b)});
    }
  }
  return CropAndResize(features, boxes, cfg_.roi_size);
}

Tensor Detector::HeadFeatures(const Tensor& rois) const {
  const int64_t n = rois.dim(0);
  const int64_t d = head_.kind == HeadKind::kFc ? cfg_.fc_dim : cfg_.channels;
  if (n == 0) return Tensor::Zeros({0, d});
  if (head_.kind == HeadKind::kFc) {
    const Tensor flat = Reshape(rois, {n, rois.numel() / n});
    return Relu(fc2_.Forward(Relu(fc1_.Forward(flat))));
  }
  return Reshape(GlobalAvgPool(RunCells(head_cells_, rois)), {n, d});
}

std::pair<Tensor, Tensor> Detector::Classify(const Tensor& feats,
                                             int64_t n_slices,
                                             Tensor* enhanced) const {
  const int64_t n = feats.dim(0);
  const int64_t k1 = cfg_.num_classes + 1;
  if (n == 0) {
    return {Tensor::Zeros({0, k1}),
            Tensor::Zeros({0, cfg_.class_agnostic_reg ? 4 : 4 * k1})};
  }
  Tensor cls_in = feats;
  if (cfg_.graph_enabled) {
    const double ni = static_cast<double>(n / n_slices);
    GraphOutput g = ApplyGraph(feats, n_slices, graph_, cfg_.graph_normalize,
                               1.0 / (ni * ni * ni));
    cls_in = g.fused;
    if (enhanced) *enhanced = g.enhanced;
  }
  return {cls_.Forward(cls_in), box_.Forward(feats)};
}

LossTerms Detector::Loss(std::span<const DetectionSample> batch,
                         SplitMix64& rng) const {
  std::vector<const DetectionSample*> ptrs;
  for (const DetectionSample& s : batch) ptrs.push_back(&s);
  return Loss(ptrs, rng);
}

LossTerms Detector::Loss(std::span<const DetectionSample* const> batch,
                         SplitMix64& rng) const {
  const Tensor images = StackImages(batch);
  const Tensor features = Features(images);
  const RpnOut rpn = RunRpn(features);
  const int64_t b = features.dim(0);
  const auto anchors =
      GenerateAnchors(cfg_.anchor, features.dim(2), features.dim(3));
  const int64_t m = static_cast<int64_t>(anchors.size());
  const double img_w = static_cast<double>(images.dim(3));
  const double img_h = static_cast<double>(images.dim(2));

  DetectionTargets t;
  t.rpn_labels.assign(b * m, -1);
  t.rpn_deltas.assign(b * m, {0, 0, 0, 0});
  for (int64_t i = 0; i < b; ++i) {
    const DetectionSample& s = *batch[i];
    const Assignment as =
        AssignRpn(anchors, s.gt_boxes, cfg_.rpn_pos_iou, cfg_.rpn_neg_iou);
    std::vector<int> pos, neg;
    for (int64_t k = 0; k < m; ++k) {
      if (as.labels[k] == 1) pos.push_back(static_cast<int>(k));
      if (as.labels[k] == 0) neg.push_back(static_cast<int>(k));
    }
    for (int k : SampleIndices(pos, neg, cfg_.rpn_batch_per_image,
                               cfg_.rpn_pos_fraction, false, rng)) {
      t.rpn_labels[i * m + k] = as.labels[k];
      if (as.labels[k] == 1) {
        t.rpn_deltas[i * m + k] =
            rpn_coder_.Encode(anchors[k], s.gt_boxes[as.matched_gt[k]]);
      }
    }
  }

  auto proposals = Propose(rpn, anchors, img_w, img_h, cfg_.rpn_pre_nms_train,
                           cfg_.rpn_post_nms_train, false);
  std::vector<std::vector<Box>> rois(b);
  for (int64_t i = 0; i < b; ++i) {
    const DetectionSample& s = *batch[i];
    std::vector<Box> cand = std::move(proposals[i]);
    cand.insert(cand.end(), s.gt_boxes.begin(), s.gt_boxes.end());
    const Assignment as =
        AssignHead(cand, s.gt_boxes, s.gt_labels, cfg_.head_fg_iou);
    std::vector<int> fg, bg;
    for (size_t k = 0; k < cand.size(); ++k) {
      (as.labels[k] > 0 ? fg : bg).push_back(static_cast<int>(k));
    }
    for (int k : SampleIndices(fg, bg, cfg_.rois_per_image,
                               cfg_.roi_fg_fraction, true, rng)) {
      rois[i].push_back(cand[k]);
      t.roi_labels.push_back(as.labels[k]);
      t.roi_deltas.push_back(
          as.labels[k] > 0
              ? head_coder_.Encode(cand[k], s.gt_boxes[as.matched_gt[k]])
              : std::array<double, 4>{0, 0, 0, 0});
    }
  }

  DetectionOutputs out;
  out.rpn_objectness = Reshape(rpn.objectness, {b * m});
  out.rpn_deltas = Reshape(rpn.deltas, {b * m, 4});
  const Tensor feats = HeadFeatures(ExtractRois(features, rois));
  std::tie(out.cls_logits, out.box_deltas) = Classify(feats, b);
  return DetectionLoss(out, t, cfg_.smooth_l1_beta, cfg_.class_agnostic_reg);
}

InferenceResult Detector::Infer(const DetectionSample& sample) const {
  const DetectionSample* p = &sample;
  return std::move(Infer(std::span<const DetectionSample* const>(&p, 1))[0]);
}

std::vector<InferenceResult> Detector::Infer(
    std::span<const DetectionSample* const> batch) const {
  NoGradGuard guard;
  const Tensor images = StackImages(batch);
  const Tensor features = Features(images);
  const RpnOut rpn = RunRpn(features);
  const int64_t b = features.dim(0);
  const auto anchors =
      GenerateAnchors(cfg_.anchor, features.dim(2), features.dim(3));
  const double img_w = static_cast<double>(images.dim(3));
  const double img_h = static_cast<double>(images.dim(2));
  const int r = cfg_.rois_per_image;
  const auto rois =
      Propose(rpn, anchors, img_w, img_h, cfg_.rpn_pre_nms_test, r, true);
  Tensor enhanced;
  const Tensor feats = HeadFeatures(ExtractRois(features, rois));
  const auto [logits, deltas] = Classify(feats, b, &enhanced);
  const Tensor probs = Softmax(logits, 1);
  const int k1 = cfg_.num_classes + 1;
  const auto pv = probs.data();
  const auto dv = deltas.data();
  const int64_t dcols = deltas.dim(1);

  std::vector<InferenceResult> results(b);
  for (int64_t i = 0; i < b; ++i) {
    InferenceResult& res = results[i];
    std::vector<std::vector<Box>> cls_boxes(k1);
    std::vector<std::vector<double>> cls_scores(k1);
    for (int j = 0; j < r; ++j) {
      const int64_t row = i * r + j;
      const Box& roi = rois[i][j];
      Box best_box = roi;
      double best = -1.0;
      for (int k = 1; k < k1; ++k) {
        const int64_t col = cfg_.class_agnostic_reg ? 0 : 4 * k;
        const Box box =
            ClipBox(head_coder_.Decode(roi, dv.subspan(row * dcols + col, 4)),
                    img_w, img_h);
        const double score = pv[row * k1 + k];
        if (score > best) {
          best = score;
          best_box = box;
        }
        if (score > cfg_.score_thresh && box.Area() > 0.0) {
          cls_boxes[k].push_back(box);
          cls_scores[k].push_back(score);
        }
      }
      res.instances.push_back({best_box, best});
    }
    for (int k = 1; k < k1; ++k) {
      for (int idx : Nms(cls_boxes[k], cls_scores[k], cfg_.test_nms_iou)) {
        res.detections.push_back({cls_boxes[k][idx], k, cls_scores[k][idx]});
      }
    }
    std::stable_sort(res.detections.begin(), res.detections.end(),
                     [](const Detection& x, const Detection& y) {
                       return x.score > y.score;
                     });
    if (static_cast<int>(res.detections.size()) > cfg_.max_detections) {
      res.detections.resize(cfg_.max_detections);
    }
    if (cfg_.graph_enabled) {
      res.enhanced = Slice(enhanced, 0, i, 1).Clone();
    } else {
      res.instances.clear();
    }
  }
  return results;
}

std::vector<NamedTensor> Detector::TrunkParams() const {
  std::vector<NamedTensor> out;
  for (size_t i = 0; i < stem_.size(); ++i) {
    stem_[i].AppendParams("stem." + std::to_string(i) + ".", out);
  }
  for (size_t s = 0; s < stages_.size(); ++s) {
    for (size_t k = 0; k < stages_[s].size(); ++k) {
      stages_[s][k]->AppendParams(
          "bone.s" + std::to_string(s) + ".c" + std::to_string(k) + ".", out);
    }
    if (s < reductions_.size()) {
      reductions_[s].AppendParams("bone.reduce" + std::to_string(s) + ".", out);
    }
  }
  out.emplace_back("rpn.conv.weight", rpn_conv_w_);
  out.emplace_back("rpn.conv.bias", rpn_conv_b_);
  out.emplace_back("rpn.obj.weight", rpn_obj_w_);
  out.emplace_back("rpn.obj.bias", rpn_obj_b_);
  out.emplace_back("rpn.delta.weight", rpn_delta_w_);
  out.emplace_back("rpn.delta.bias", rpn_delta_b_);
  return out;
}

std::vector<NamedTensor> Detector::HeadParams() const {
  std::vector<NamedTensor> out;
  if (head_.kind == HeadKind::kFc) {
    fc1_.AppendParams("head.fc1.", out);
    fc2_.AppendParams("head.fc2.", out);
  } else {
    for (size_t k = 0; k < head_cells_.size(); ++k) {
      head_cells_[k]->AppendParams("head.c" + std::to_string(k) + ".", out);
    }
  }
  cls_.AppendParams("head.cls.", out);
  box_.AppendParams("head.box.", out);
  return out;
}

std::vector<NamedTensor> Detector::GraphParamsList() const {
  std::vector<NamedTensor> out;
  if (cfg_.graph_enabled) graph_.AppendParams("graph.", out);
  return out;
}

std::vector<NamedTensor> Detector::WeightParams() const {
  auto out = TrunkParams();
  for (auto& p : HeadParams()) out.push_back(std::move(p));
  for (auto& p : GraphParamsList()) out.push_back(std::move(p));
  return out;
}

std::vector<NamedTensor> Detector::ArchParamsList() const {
  std::vector<NamedTensor> out;
  if (bone_.alpha) out.emplace_back("arch.bone", bone_.alpha->logits);
  if (head_.kind == HeadKind::kConv && head_.arch.alpha) {
    out.emplace_back("arch.head", head_.arch.alpha->logits);
  }
  return out;
}

ParamGroup Detector::WeightGroup() const {
  ParamGroup g{GroupKind::kWeight, {}};
  if (!trunk_frozen_) g.members = TrunkParams();
  for (auto& p : HeadParams()) g.members.push_back(std::move(p));
  for (auto& p : GraphParamsList()) g.members.push_back(std::move(p));
  return g;
}

ParamGroup Detector::ArchGroup() const {
  return {GroupKind::kArch, ArchParamsList()};
}

ParamBreakdown Detector::CountParams() const {
  ParamBreakdown p;
  for (const auto& [name, t] : TrunkParams()) {
    (name.rfind("rpn.", 0) == 0 ? p.rpn : p.backbone) += t.numel();
  }
  p.head = CountScalars(HeadParams());
  p.graph = CountScalars(GraphParamsList());
  p.total = p.backbone + p.head + p.rpn + p.graph;
  return p;
}

namespace {

void InheritCells(const std::vector<std::unique_ptr<Cell>>& src,
                  const std::vector<std::unique_ptr<Cell>>& dst,
                  const std::string& prefix) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("inherit: cell count differs");
  }
  for (size_t k = 0; k < src.size(); ++k) {
    auto* to_discrete = dynamic_cast<DiscreteCell*>(dst[k].get());
    const auto* from_mixed = dynamic_cast<const MixedCell*>(src[k].get());
    if (to_discrete && from_mixed) {
      to_discrete->InheritFrom(*from_mixed);
      continue;
    }
    std::vector<NamedTensor> a, b;
    src[k]->AppendParams(prefix, a);
    dst[k]->AppendParams(prefix, b);
    CopyTensorData(a, b);
  }
}

}  // namespace

void Detector::InheritTrunk(const Detector& source) {
  if (source.cfg_.channels != cfg_.channels ||
      source.stages_.size() != stages_.size()) {
    throw std::invalid_argument("inherit: trunk shapes differ");
  }
  for (size_t i = 0; i < stem_.size(); ++i) {
    std::vector<NamedTensor> a, b;
    source.stem_[i].AppendParams("", a);
    stem_[i].AppendParams("", b);
    CopyTensorData(a, b);
  }
  for (size_t s = 0; s < stages_.size(); ++s) {
    InheritCells(source.stages_[s], stages_[s], "");
  }
  for (size_t s = 0; s < reductions_.size(); ++s) {
    std::vector<NamedTensor> a, b;
    source.reductions_[s].AppendParams("", a);
    reductions_[s].AppendParams("", b);
    CopyTensorData(a, b);
  }
  CopyTensorData({{"", source.rpn_conv_w_},
                  {"", source.rpn_conv_b_},
                  {"", source.rpn_obj_w_},
                  {"", source.rpn_obj_b_},
                  {"", source.rpn_delta_w_},
                  {"", source.rpn_delta_b_}},
                 {{"", rpn_conv_w_},
                  {"", rpn_conv_b_},
                  {"", rpn_obj_w_},
                  {"", rpn_obj_b_},
                  {"", rpn_delta_w_},
                  {"", rpn_delta_b_}});
}

void Detector::InheritHead(const Detector& source) {
  if (source.head_.kind != head_.kind) {
    throw std::invalid_argument("inherit: head kinds differ");
  }
  if (head_.kind == HeadKind::kFc) {
    std::vector<NamedTensor> a, b;
    source.fc1_.AppendParams("", a);
    source.fc2_.AppendParams("", a);
    fc1_.AppendParams("", b);
    fc2_.AppendParams("", b);
    CopyTensorData(a, b);
  } else {
    InheritCells(source.head_cells_, head_cells_, "");
  }
  std::vector<NamedTensor> a, b;
  source.cls_.AppendParams("", a);
  source.box_.AppendParams("", a);
  cls_.AppendParams("", b);
  box_.AppendParams("", b);
  if (source.cfg_.graph_enabled && cfg_.graph_enabled) {
    source.graph_.AppendParams("", a);
    graph_.AppendParams("", b);
  }
  CopyTensorData(a, b);
}

void Detector::FreezeTrunk(bool frozen) {
  trunk_frozen_ = frozen;
  for (auto& [name, t] : TrunkParams()) {
    Tensor handle = t;
    handle.set_requires_grad(!frozen);
    if (frozen) handle.ClearGrad();
  }
}

}  // namespace fsd
