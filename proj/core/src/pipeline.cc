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

#include "fsd/pipeline.h"

#include <fstream>
#include <stdexcept>

#include "fsd/checkpoint.h"
#include "fsd/region_graph.h"
#include "fsd/rng.h"
#include "fsd/search.h"
#include "json.hpp"

namespace fsd {
namespace {

namespace fs = std::filesystem;

constexpr uint64_t kFinetuneTag = 0x66696e65;
constexpr uint64_t kFinalTag = 0x66696e6c;

std::vector<NamedTensor> Concat(std::vector<NamedTensor> a,
                                const std::vector<NamedTensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace

JsonlLogger::JsonlLogger(const fs::path& path, bool append) : path_(path) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void JsonlLogger::operator()(const SearchLogRecord& r) {
  nlohmann::json j;
  j["stage"] = r.stage;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["lr"] = r.lr;
  std::ofstream out(path_, std::ios::app);
  out << j.dump() << '\n';
}

SearchLogger JsonlLogger::AsLogger() {
  return [this](const SearchLogRecord& r) { (*this)(r); };
}

BackboneStage RunBackboneStage(std::span<const DetectionSample> data,
                               const RunConfig& cfg, const fs::path& out_dir,
                               const SearchLogger& log) {
  StageResult search = SearchBackbone(data, cfg.model, cfg.search, log);
  BackboneStage out;
  out.alpha = search.alpha;
  out.search_train_loss = search.epoch_train_loss;
  out.genotype = DeriveGenotype(search.alpha);
  SaveAlphaTsv(out_dir / artifacts::kAlphaBone, search.alpha);
  SaveGenotype(out_dir / artifacts::kGenotypeBackbone, out.genotype);

  Detector derived(cfg.model, ArchChoice::Fixed(out.genotype), HeadChoice::Fc(),
                   DeriveSeed(cfg.seed, {kFinetuneTag}));
  derived.InheritTrunk(*search.detector);
  derived.InheritHead(*search.detector);
  if (cfg.bone_finetune_epochs > 0) {
    TrainConfig ft = cfg.train;
    ft.epochs = cfg.bone_finetune_epochs;
    ft.seed = DeriveSeed(cfg.train.seed, {kFinetuneTag});
    TrainDetector(derived, data, ft, log, "backbone_finetune");
  }
  for (const auto& [name, t] : derived.TrunkParams()) {
    out.trunk.emplace_back(name, t.Clone());
  }
  SaveCheckpoint(out_dir / artifacts::kBackboneCkpt, out.trunk);
  return out;
}

HeadStage RunHeadStage(std::span<const DetectionSample> data,
                       const RunConfig& cfg, const Genotype& backbone,
                       const std::vector<NamedTensor>& trunk,
                       const fs::path& out_dir, const SearchLogger& log) {
  StageResult search =
      SearchHead(data, cfg.model, cfg.search, backbone, trunk, log);
  HeadStage out;
  out.alpha = search.alpha;
  out.search_val_loss = search.epoch_val_loss;
  out.genotype = DeriveGenotype(search.alpha);
  SaveAlphaTsv(out_dir / artifacts::kAlphaHead, search.alpha);
  SaveGenotype(out_dir / artifacts::kGenotypeHead, out.genotype);

  auto derived = BuildFinalDetector(cfg, backbone, out.genotype);
  derived->InheritHead(*search.detector);
  for (const auto& [name, t] :
       Concat(derived->HeadParams(), search.detector->GraphParamsList())) {
    out.head.emplace_back(name, t.Clone());
  }
  SaveCheckpoint(out_dir / artifacts::kHeadCkpt, out.head);
  return out;
}

std::unique_ptr<Detector> BuildFinalDetector(const RunConfig& cfg,
                                             const Genotype& backbone,
                                             const Genotype& head) {
  return std::make_unique<Detector>(cfg.model, ArchChoice::Fixed(backbone),
                                    HeadChoice::Conv(ArchChoice::Fixed(head)),
                                    DeriveSeed(cfg.seed, {kFinalTag}));
}

std::unique_ptr<Detector> RunFinalStage(
    std::span<const DetectionSample> data, const RunConfig& cfg,
    const Genotype& backbone, const Genotype& head,
    const std::vector<NamedTensor>& trunk,
    const std::vector<NamedTensor>& head_weights, const fs::path& out_dir,
    const SearchLogger& log) {
  auto det = BuildFinalDetector(cfg, backbone, head);
  if (!trunk.empty()) RestoreInto(trunk, det->TrunkParams());
  if (!head_weights.empty()) {
    RestoreInto(head_weights,
                Concat(det->HeadParams(), det->GraphParamsList()));
  }
  TrainDetector(*det, data, cfg.train, log, "train");
  if (!out_dir.empty()) {
    SaveCheckpoint(out_dir / artifacts::kFinalCkpt, det->WeightParams());
  }
  return det;
}

PipelineResult RunFsdNas(std::span<const DetectionSample> data,
                         const RunConfig& cfg, const fs::path& out_dir,
                         const PipelineOptions& options) {
  cfg.Validate();
  fs::create_directories(out_dir);
  const fs::path geno_path = out_dir / artifacts::kGenotypeBackbone;
  const fs::path ckpt_path = out_dir / artifacts::kBackboneCkpt;
  PipelineResult result;
  result.resumed =
      options.resume && fs::exists(geno_path) && fs::exists(ckpt_path);
  WriteText(out_dir / artifacts::kConfig, FormatConfig(cfg));
  JsonlLogger logger(out_dir / artifacts::kSearchLog, result.resumed);
  const SearchLogger log = logger.AsLogger();

  std::vector<NamedTensor> trunk;
  if (result.resumed) {
    result.backbone = LoadGenotype(geno_path);
    trunk = LoadCheckpoint(ckpt_path);
  } else {
    BackboneStage bone = RunBackboneStage(data, cfg, out_dir, log);
    result.backbone = bone.genotype;
    trunk = std::move(bone.trunk);
  }
  HeadStage head =
      RunHeadStage(data, cfg, result.backbone, trunk, out_dir, log);
  result.head = head.genotype;
  result.detector = RunFinalStage(data, cfg, result.backbone, result.head,
                                  trunk, head.head, out_dir, log);
  return result;
}

std::optional<EvalTask> ParseTask(std::string_view name) {
  if (name == "binary") return EvalTask::kBinary;
  if (name == "multiclass") return EvalTask::kMulticlass;
  return std::nullopt;
}

EvalSet ApplyTask(EvalSet set, EvalTask task) {
  if (task == EvalTask::kBinary) {
    for (auto& d : set.detections) d.class_id = 1;
    for (auto& g : set.ground_truth) g.class_id = 1;
  }
  return set;
}

std::vector<std::string> TaskClassNames(const RunConfig& cfg, EvalTask task) {
  if (task == EvalTask::kBinary) return {"lesion"};
  return cfg.data.ClassNames();
}

std::vector<ImageDetections> Predict(const Detector& detector,
                                     std::span<const DetectionSample> data) {
  NoGradGuard guard;
  std::vector<ImageDetections> out;
  for (const auto& s : data) {
    out.push_back({s.id, detector.Infer(s).detections});
  }
  return out;
}

void ExportDetectorRelations(const Detector& detector,
                             std::span<const DetectionSample> data,
                             const fs::path& path) {
  NoGradGuard guard;
  std::vector<Tensor> slices;
  std::vector<RelationInstance> instances;
  std::vector<int64_t> ids;
  for (size_t i = 0; i < data.size(); ++i) {
    InferenceResult r = detector.Infer(data[i]);
    if (r.instances.empty()) continue;
    if (!slices.empty() && r.enhanced.shape() != slices.front().shape()) {
      throw std::runtime_error("relations: images disagree on instance count");
    }
    slices.push_back(r.enhanced);
    instances.insert(instances.end(), r.instances.begin(), r.instances.end());
    ids.push_back(static_cast<int64_t>(i));
  }
  const Tensor enhanced =
      slices.empty() ? Tensor::Zeros({0, 0, 0}) : fsd::Concat(slices, 0);
  ExportRelations(path, enhanced, instances, ids);
}

std::vector<MetricsReport> EvaluateAndExport(
    const Detector& detector, std::span<const DetectionSample> data,
    const RunConfig& cfg, EvalTask task, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto predictions = Predict(detector, data);
  WritePredictions(out_dir / artifacts::kPredictions, predictions);
  ExportDetectorRelations(detector, data, out_dir / artifacts::kRelations);
  const EvalSet set = ApplyTask(BuildEvalSet(data, predictions), task);
  std::vector<MetricsReport> reports;
  for (const auto c : {OverlapCriterion::kIoU, OverlapCriterion::kIoBB}) {
    reports.push_back(
        PerClassReport(set, c, cfg.eval.fppi_points, cfg.eval.match_threshold));
  }
  const auto names = TaskClassNames(cfg, task);
  WriteText(out_dir / artifacts::kMetrics, FormatReportRecords(reports, names));
  return reports;
}

}  // namespace fsd
