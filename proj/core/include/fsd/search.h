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

// Bilevel architecture search: alternating architecture and weight steps,
// the staged backbone / head searches, and plain detector training.

#ifndef FSD_SEARCH_H_
#define FSD_SEARCH_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fsd/dataset.h"
#include "fsd/detector.h"
#include "fsd/optim.h"
#include "fsd/supernet.h"
#include "fsd/tensor.h"

namespace fsd {

struct SearchConfig {
  int epochs = 8;
  // Learning rates are per image; steps scale them by batch_size.
  double w_lr = 0.01;
  double w_momentum = 0.9;
  double w_decay = 0.0003;
  double alpha_lr = 0.0024;
  double alpha_decay = 0.001;
  std::pair<double, double> alpha_betas = {0.5, 0.999};
  double cosine_floor = 0.0001;
  // Fraction of epochs (rounded down) during which alpha stays frozen.
  double warmup_fraction = 0.2;
  int batch_size = 2;
  double alpha_noise = 1e-3;
  // Finite-difference unrolled hypergradient instead of first order.
  bool unrolled = false;
  // Never update alpha (the weight trajectory then equals plain training).
  bool freeze_alpha = false;
  uint64_t seed = 0;

  void Validate() const;
  int WarmupEpochs() const;
};

struct SearchSplit {
  std::vector<int> train_half;
  std::vector<int> val_half;
};

// Seeded shuffle, then the first ceil(n / 2) ids train and the rest validate.
SearchSplit SplitTrainVal(size_t num_samples, uint64_t seed);

// floor + (base - floor) * (1 + cos(pi * step / (total - 1))) / 2, so the
// first step uses base and the last uses floor.
double CosineLr(int64_t step, int64_t total, double base, double floor);

struct StepLosses {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Loss closures take a batch id and must be deterministic in it.
struct BilevelModel {
  std::function<Tensor(int64_t)> train_loss;
  std::function<Tensor(int64_t)> val_loss;
  ParamGroup weights{GroupKind::kWeight, {}};
  ParamGroup arch{GroupKind::kArch, {}};
  bool weights_frozen = false;
};

class BilevelOptimizer {
 public:
  explicit BilevelOptimizer(const SearchConfig& cfg);

  // (a) one Adam step on arch from the validation loss (skipped when
  // update_alpha is false, the loss is still evaluated), then (b) one SGD
  // step on weights from the training loss. w_lr is the step's learning rate
  // as used, alpha_lr likewise.
  StepLosses Step(BilevelModel& model, int64_t train_batch, int64_t val_batch,
                  double w_lr, double alpha_lr, bool update_alpha);

 private:
  void UnrolledArchGrad(BilevelModel& model, int64_t train_batch,
                        int64_t val_batch, double xi);

  SearchConfig cfg_;
  SgdOptimizer sgd_;
  AdamOptimizer adam_;
};

struct SearchLogRecord {
  std::string stage;
  int64_t epoch = 0;
  int64_t step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};
using SearchLogger = std::function<void(const SearchLogRecord&)>;

struct StageResult {
  ArchParams alpha;
  std::unique_ptr<Detector> detector;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_val_loss;
};

// Supernet backbone with the FC head; step (b) trains every detector weight
// on the total loss, step (a) moves alpha_bone on the validation loss.
StageResult SearchBackbone(std::span<const DetectionSample> data,
                           const DetectorConfig& det_cfg,
                           const SearchConfig& cfg,
                           const SearchLogger& log = {});

// Genotype backbone restored from `trunk` and frozen; supernet conv head.
// Both steps use the head loss only.
StageResult SearchHead(std::span<const DetectionSample> data,
                       const DetectorConfig& det_cfg, const SearchConfig& cfg,
                       const Genotype& backbone,
                       const std::vector<NamedTensor>& trunk,
                       const SearchLogger& log = {});

// Step (b) of the backbone search alone, on the same batches, schedule and
// sampling streams: the reference run for the frozen-alpha property.
std::vector<double> TrainWeightsOnly(Detector& detector,
                                     std::span<const DetectionSample> data,
                                     const SearchConfig& cfg,
                                     const std::string& stage = "backbone");

struct TrainConfig {
  int epochs = 12;
  double lr = 0.005;  // per image
  double momentum = 0.9;
  double weight_decay = 0.0001;
  int batch_size = 2;
  int warmup_iters = 50;
  double warmup_factor = 1.0 / 3.0;
  // Decay points as fractions of the total step count.
  std::vector<double> milestones = {8.0 / 12.0, 11.0 / 12.0};
  double gamma = 0.1;
  uint64_t seed = 0;

  void Validate() const;
};

// Linear warmup then step decay, per-image lr scaled by batch size.
double TrainLr(const TrainConfig& cfg, int64_t step, int64_t total);

// SGD on every trainable weight with the total detection loss. Returns the
// mean training loss per epoch.
std::vector<double> TrainDetector(Detector& detector,
                                  std::span<const DetectionSample> data,
                                  const TrainConfig& cfg,
                                  const SearchLogger& log = {},
                                  const std::string& stage = "train");

}  // namespace fsd

#endif  // FSD_SEARCH_H_
