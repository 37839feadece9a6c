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

#include "fsd/search.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "fsd/checkpoint.h"
#include "fsd/rng.h"

namespace fsd {
namespace {

enum StageTag : uint64_t {
  kStageBackbone = 0x626f6e65,
  kStageHead = 0x68656164,
  kStageTrain = 0x7472616e,
};

enum Purpose : uint64_t {
  kOrderTrain = 0,
  kOrderVal = 1,
  kLossTrain = 2,
  kLossVal = 3
};

uint64_t StageTagOf(const std::string& stage) {
  if (stage == "backbone") return kStageBackbone;
  if (stage == "head") return kStageHead;
  return kStageTrain;
}

std::vector<std::vector<double>> Snapshot(const ParamGroup& g) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : g.members) {
    out.emplace_back(t.data().begin(), t.data().end());
  }
  return out;
}

void Restore(ParamGroup& g, const std::vector<std::vector<double>>& values) {
  for (size_t i = 0; i < g.members.size(); ++i) {
    auto d = g.members[i].second.mutable_data();
    std::copy(values[i].begin(), values[i].end(), d.begin());
  }
}

std::vector<std::vector<double>> Grads(const ParamGroup& g) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : g.members) {
    if (t.has_grad()) {
      out.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      out.emplace_back(t.numel(), 0.0);
    }
  }
  return out;
}

double CheckedValue(const Tensor& loss, const char* which, int64_t batch) {
  const double v = loss.item();
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string("non-finite ") + which +
                             " loss on batch " + std::to_string(batch));
  }
  return v;
}

// Shuffled id order of one epoch, cut into batches.
std::vector<std::vector<int>> EpochBatches(std::span<const int> ids,
                                           int batch_size, uint64_t seed) {
  std::vector<int> order(ids.begin(), ids.end());
  SplitMix64 rng(seed);
  rng.Shuffle(order);
  std::vector<std::vector<int>> batches;
  for (size_t i = 0; i < order.size(); i += batch_size) {
    const size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

std::vector<const DetectionSample*> Gather(
    std::span<const DetectionSample> data, const std::vector<int>& ids) {
  std::vector<const DetectionSample*> out;
  for (int i : ids) out.push_back(&data[i]);
  return out;
}

struct LoopSpec {
  std::string stage;
  bool head_loss_only = false;
  bool arch_step = true;
};

// Shared search loop; with arch_step false only step (b) runs.
std::pair<std::vector<double>, std::vector<double>> RunSearchLoop(
    Detector& det, std::span<const DetectionSample> data,
    const SearchConfig& cfg, const LoopSpec& spec, const SearchLogger& log) {
  cfg.Validate();
  const SearchSplit split = SplitTrainVal(data.size(), cfg.seed);
  const uint64_t tag = StageTagOf(spec.stage);
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(split.train_half.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  const int64_t total = steps_per_epoch * cfg.epochs;

  BilevelModel model;
  model.weights = det.WeightGroup();
  model.arch = det.ArchGroup();
  std::vector<int> current_train, current_val;
  int64_t current_step = 0;
  auto loss_of = [&](const std::vector<int>& ids, uint64_t purpose) {
    SplitMix64 rng(
        DeriveSeed(cfg.seed, {tag, uint64_t(current_step), purpose}));
    LossTerms terms = det.Loss(Gather(data, ids), rng);
    return spec.head_loss_only ? terms.head() : terms.total();
  };
  model.train_loss = [&](int64_t) {
    return loss_of(current_train, kLossTrain);
  };
  model.val_loss = [&](int64_t) { return loss_of(current_val, kLossVal); };

  BilevelOptimizer opt(cfg);
  SgdOptimizer plain_sgd;
  std::vector<double> epoch_train, epoch_val;
  const int warmup = cfg.WarmupEpochs();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto train_batches =
        EpochBatches(split.train_half, cfg.batch_size,
                     DeriveSeed(cfg.seed, {tag, uint64_t(epoch), kOrderTrain}));
    const auto val_batches =
        EpochBatches(split.val_half, cfg.batch_size,
                     DeriveSeed(cfg.seed, {tag, uint64_t(epoch), kOrderVal}));
    double sum_train = 0.0, sum_val = 0.0;
    for (size_t b = 0; b < train_batches.size(); ++b, ++current_step) {
      current_train = train_batches[b];
      current_val = val_batches[b % val_batches.size()];
      const double lr =
          CosineLr(current_step, total, cfg.w_lr, cfg.cosine_floor) *
          cfg.batch_size;
      StepLosses losses;
      if (spec.arch_step) {
        const bool update = !cfg.freeze_alpha && epoch >= warmup;
        losses = opt.Step(model, current_step, current_step, lr,
                          cfg.alpha_lr * cfg.batch_size, update);
      } else {
        model.weights.ZeroGrad();
        Tensor loss = model.train_loss(current_step);
        losses.train_loss = CheckedValue(loss, "train", current_step);
        loss.Backward();
        plain_sgd.Step(model.weights, lr, cfg.w_momentum, cfg.w_decay);
      }
      sum_train += losses.train_loss;
      sum_val += losses.val_loss;
      if (log) {
        log({spec.stage, epoch, current_step, losses.train_loss,
             losses.val_loss, lr});
      }
    }
    const double n =
        static_cast<double>(std::max<size_t>(1, train_batches.size()));
    epoch_train.push_back(sum_train / n);
    epoch_val.push_back(sum_val / n);
  }
  return {epoch_train, epoch_val};
}

}  // namespace

void SearchConfig::Validate() const {
  if (epochs < 0) throw std::invalid_argument("search: epochs < 0");
  if (!(w_lr > 0) || !(alpha_lr > 0)) {
    throw std::invalid_argument("search: learning rates must be > 0");
  }
  if (!(cosine_floor >= 0) || cosine_floor > w_lr) {
    throw std::invalid_argument("search: cosine_floor must be in [0, w_lr]");
  }
  if (batch_size < 1) throw std::invalid_argument("search: batch_size < 1");
  if (warmup_fraction < 0 || warmup_fraction > 1) {
    throw std::invalid_argument("search: warmup_fraction outside [0, 1]");
  }
  if (alpha_noise < 0) throw std::invalid_argument("search: alpha_noise < 0");
}

int SearchConfig::WarmupEpochs() const {
  return static_cast<int>(std::floor(warmup_fraction * epochs + 1e-9));
}

SearchSplit SplitTrainVal(size_t num_samples, uint64_t seed) {
  if (num_samples < 2) {
    throw std::invalid_argument(
        "split_train_val: need at least 2 samples, got " +
        std::to_string(num_samples));
  }
  std::vector<int> ids(num_samples);
  std::iota(ids.begin(), ids.end(), 0);
  SplitMix64 rng(DeriveSeed(seed, {0x73706c69}));
  rng.Shuffle(ids);
  const size_t half = (num_samples + 1) / 2;
  SearchSplit s;
  s.train_half.assign(ids.begin(), ids.begin() + half);
  s.val_half.assign(ids.begin() + half, ids.end());
  return s;
}

double CosineLr(int64_t step, int64_t total, double base, double floor) {
  if (total <= 1) return floor;
  const double t =
      std::clamp(static_cast<double>(step) / (total - 1), 0.0, 1.0);
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

BilevelOptimizer::BilevelOptimizer(const SearchConfig& cfg) : cfg_(cfg) {}

void BilevelOptimizer::UnrolledArchGrad(BilevelModel& model,
                                        int64_t train_batch, int64_t val_batch,
                                        double xi) {
  ParamGroup& w = model.weights;
  ParamGroup& a = model.arch;
  const auto w0 = Snapshot(w);

  // w' = w - xi * grad_w L_train(w, alpha).
  a.SetRequiresGrad(false);
  w.ZeroGrad();
  model.train_loss(train_batch).Backward();
  const auto gw = Grads(w);
  for (size_t i = 0; i < w.members.size(); ++i) {
    auto d = w.members[i].second.mutable_data();
    for (size_t k = 0; k < d.size(); ++k) d[k] -= xi * gw[i][k];
  }

  // grad_alpha and grad_w' of L_val(w', alpha).
  a.SetRequiresGrad(true);
  a.ZeroGrad();
  w.ZeroGrad();
  model.val_loss(val_batch).Backward();
  auto ga = Grads(a);
  const auto dw = Grads(w);
  double norm = 0.0;
  for (const auto& v : dw) {
    for (double x : v) norm += x * x;
  }
  norm = std::sqrt(norm);

  if (norm > 0.0) {
    const double eps = 0.01 / norm;
    w.SetRequiresGrad(false);
    std::vector<std::vector<double>> g_plus, g_minus;
    for (const double sign : {1.0, -1.0}) {
      Restore(w, w0);
      for (size_t i = 0; i < w.members.size(); ++i) {
        auto d = w.members[i].second.mutable_data();
        for (size_t k = 0; k < d.size(); ++k) d[k] += sign * eps * dw[i][k];
      }
      a.ZeroGrad();
      model.train_loss(train_batch).Backward();
      (sign > 0 ? g_plus : g_minus) = Grads(a);
    }
    w.SetRequiresGrad(true);
    for (size_t i = 0; i < ga.size(); ++i) {
      for (size_t k = 0; k < ga[i].size(); ++k) {
        ga[i][k] -= xi * (g_plus[i][k] - g_minus[i][k]) / (2.0 * eps);
      }
    }
  }
  Restore(w, w0);
  w.ZeroGrad();
  for (size_t i = 0; i < a.members.size(); ++i) {
    auto g = a.members[i].second.mutable_grad();
    std::copy(ga[i].begin(), ga[i].end(), g.begin());
  }
}

StepLosses BilevelOptimizer::Step(BilevelModel& model, int64_t train_batch,
                                  int64_t val_batch, double w_lr,
                                  double alpha_lr, bool update_alpha) {
  StepLosses out;
  ParamGroup& w = model.weights;
  ParamGroup& a = model.arch;

  // (a) architecture step on the validation loss, weights held fixed.
  if (update_alpha && cfg_.unrolled && !a.members.empty()) {
    {
      NoGradGuard guard;
      out.val_loss = CheckedValue(model.val_loss(val_batch), "val", val_batch);
    }
    UnrolledArchGrad(model, train_batch, val_batch, w_lr);
    adam_.Step(a, alpha_lr, cfg_.alpha_betas, cfg_.alpha_decay);
  } else if (update_alpha && !a.members.empty()) {
    w.SetRequiresGrad(false);
    a.SetRequiresGrad(true);
    a.ZeroGrad();
    Tensor loss = model.val_loss(val_batch);
    out.val_loss = CheckedValue(loss, "val", val_batch);
    w.SetRequiresGrad(true);
    // A validation loss that does not depend on alpha leaves it untouched.
    if (loss.requires_grad()) {
      loss.Backward();
      adam_.Step(a, alpha_lr, cfg_.alpha_betas, cfg_.alpha_decay);
    }
  } else {
    NoGradGuard guard;
    out.val_loss = CheckedValue(model.val_loss(val_batch), "val", val_batch);
  }
  w.ZeroGrad();

  // (b) weight step on the training loss, alpha held fixed.
  if (model.weights_frozen || w.members.empty()) {
    NoGradGuard guard;
    out.train_loss =
        CheckedValue(model.train_loss(train_batch), "train", train_batch);
  } else {
    a.SetRequiresGrad(false);
    w.ZeroGrad();
    Tensor loss = model.train_loss(train_batch);
    out.train_loss = CheckedValue(loss, "train", train_batch);
    a.SetRequiresGrad(true);
    if (loss.requires_grad()) {
      loss.Backward();
      sgd_.Step(w, w_lr, cfg_.w_momentum, cfg_.w_decay);
    }
  }
  return out;
}

StageResult SearchBackbone(std::span<const DetectionSample> data,
                           const DetectorConfig& det_cfg,
                           const SearchConfig& cfg, const SearchLogger& log) {
  CellSpec spec;
  spec.num_nodes = det_cfg.bone_nodes;
  spec.space = OpSpace::kBackbone;
  StageResult r;
  r.alpha = InitAlpha(spec, cfg.alpha_noise,
                      DeriveSeed(cfg.seed, {kStageBackbone, 0x616c70}));
  r.detector = std::make_unique<Detector>(
      det_cfg, ArchChoice::Supernet(r.alpha), HeadChoice::Fc(),
      DeriveSeed(cfg.seed, {kStageBackbone, 0x77}));
  std::tie(r.epoch_train_loss, r.epoch_val_loss) =
      RunSearchLoop(*r.detector, data, cfg, {"backbone", false, true}, log);
  return r;
}

StageResult SearchHead(std::span<const DetectionSample> data,
                       const DetectorConfig& det_cfg, const SearchConfig& cfg,
                       const Genotype& backbone,
                       const std::vector<NamedTensor>& trunk,
                       const SearchLogger& log) {
  CellSpec spec;
  spec.num_nodes = det_cfg.head_nodes;
  spec.space = OpSpace::kHead;
  StageResult r;
  r.alpha = InitAlpha(spec, cfg.alpha_noise,
                      DeriveSeed(cfg.seed, {kStageHead, 0x616c70}));
  r.detector = std::make_unique<Detector>(
      det_cfg, ArchChoice::Fixed(backbone),
      HeadChoice::Conv(ArchChoice::Supernet(r.alpha)),
      DeriveSeed(cfg.seed, {kStageHead, 0x77}));
  RestoreInto(trunk, r.detector->TrunkParams());
  r.detector->FreezeTrunk(true);
  std::tie(r.epoch_train_loss, r.epoch_val_loss) =
      RunSearchLoop(*r.detector, data, cfg, {"head", true, true}, log);
  return r;
}

std::vector<double> TrainWeightsOnly(Detector& detector,
                                     std::span<const DetectionSample> data,
                                     const SearchConfig& cfg,
                                     const std::string& stage) {
  return RunSearchLoop(detector, data, cfg, {stage, stage == "head", false}, {})
      .first;
}

void TrainConfig::Validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs < 0");
  if (!(lr > 0)) throw std::invalid_argument("train: lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size < 1");
  if (warmup_iters < 0) throw std::invalid_argument("train: warmup_iters < 0");
}

double TrainLr(const TrainConfig& cfg, int64_t step, int64_t total) {
  double lr = cfg.lr * cfg.batch_size;
  for (double m : cfg.milestones) {
    if (step >= static_cast<int64_t>(std::floor(m * total))) lr *= cfg.gamma;
  }
  if (step < cfg.warmup_iters) {
    const double alpha = static_cast<double>(step) / cfg.warmup_iters;
    lr *= cfg.warmup_factor * (1.0 - alpha) + alpha;
  }
  return lr;
}

std::vector<double> TrainDetector(Detector& detector,
                                  std::span<const DetectionSample> data,
                                  const TrainConfig& cfg,
                                  const SearchLogger& log,
                                  const std::string& stage) {
  cfg.Validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<int> ids(data.size());
  std::iota(ids.begin(), ids.end(), 0);
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(ids.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total = steps_per_epoch * cfg.epochs;
  ParamGroup weights = detector.WeightGroup();
  SgdOptimizer sgd;
  std::vector<double> epoch_loss;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = EpochBatches(
        ids, cfg.batch_size,
        DeriveSeed(cfg.seed, {kStageTrain, uint64_t(epoch), kOrderTrain}));
    double sum = 0.0;
    for (const auto& batch : batches) {
      SplitMix64 rng(
          DeriveSeed(cfg.seed, {kStageTrain, uint64_t(step), kLossTrain}));
      weights.ZeroGrad();
      Tensor loss = detector.Loss(Gather(data, batch), rng).total();
      const double v = CheckedValue(loss, "train", step);
      loss.Backward();
      const double lr = TrainLr(cfg, step, total);
      sgd.Step(weights, lr, cfg.momentum, cfg.weight_decay);
      sum += v;
      if (log) log({stage, epoch, step, v, 0.0, lr});
      ++step;
    }
    epoch_loss.push_back(sum / static_cast<double>(batches.size()));
  }
  return epoch_loss;
}

}  // namespace fsd
