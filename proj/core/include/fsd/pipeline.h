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

// End-to-end search and training: backbone search, backbone derivation,
// head search on the frozen derived backbone, head derivation and final
// training, with every stage writing its artifacts before the next starts.

#ifndef FSD_PIPELINE_H_
#define FSD_PIPELINE_H_

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fsd/dataset.h"
#include "fsd/detector.h"
#include "fsd/metrics.h"
#include "fsd/run_config.h"
#include "fsd/supernet.h"

namespace fsd {

namespace artifacts {
inline constexpr const char* kAlphaBone = "alpha_bone.tsv";
inline constexpr const char* kGenotypeBackbone = "genotype_backbone.txt";
inline constexpr const char* kBackboneCkpt = "backbone_ckpt.bin";
inline constexpr const char* kAlphaHead = "alpha_head.tsv";
inline constexpr const char* kGenotypeHead = "genotype_head.txt";
inline constexpr const char* kHeadCkpt = "head_ckpt.bin";
inline constexpr const char* kFinalCkpt = "final_ckpt.bin";
inline constexpr const char* kSearchLog = "search_log.jsonl";
inline constexpr const char* kPredictions = "predictions.txt";
inline constexpr const char* kRelations = "relations.txt";
inline constexpr const char* kMetrics = "metrics.txt";
inline constexpr const char* kConfig = "config.txt";
}  // namespace artifacts

// Appends one JSON object per record to a line-delimited log.
class JsonlLogger {
 public:
  JsonlLogger(const std::filesystem::path& path, bool append);
  void operator()(const SearchLogRecord& r);
  SearchLogger AsLogger();

 private:
  std::filesystem::path path_;
};

struct BackboneStage {
  ArchParams alpha;
  Genotype genotype;
  // Trunk of the derived detector after weight inheritance and fine-tuning.
  std::vector<NamedTensor> trunk;
  std::vector<double> search_train_loss;
};

struct HeadStage {
  ArchParams alpha;
  Genotype genotype;
  // Head and graph weights of the derived head.
  std::vector<NamedTensor> head;
  std::vector<double> search_val_loss;
};

// Writes alpha_bone.tsv, genotype_backbone.txt and backbone_ckpt.bin.
BackboneStage RunBackboneStage(std::span<const DetectionSample> data,
                               const RunConfig& cfg,
                               const std::filesystem::path& out_dir,
                               const SearchLogger& log = {});

// Writes alpha_head.tsv, genotype_head.txt and head_ckpt.bin.
HeadStage RunHeadStage(std::span<const DetectionSample> data,
                       const RunConfig& cfg, const Genotype& backbone,
                       const std::vector<NamedTensor>& trunk,
                       const std::filesystem::path& out_dir,
                       const SearchLogger& log = {});

// The assembled detector: genotype backbone and genotype conv head.
std::unique_ptr<Detector> BuildFinalDetector(const RunConfig& cfg,
                                             const Genotype& backbone,
                                             const Genotype& head);

// Restores the stage checkpoints (either may be empty), trains every weight
// and writes final_ckpt.bin when out_dir is non-empty.
std::unique_ptr<Detector> RunFinalStage(
    std::span<const DetectionSample> data, const RunConfig& cfg,
    const Genotype& backbone, const Genotype& head,
    const std::vector<NamedTensor>& trunk,
    const std::vector<NamedTensor>& head_weights,
    const std::filesystem::path& out_dir, const SearchLogger& log = {});

struct PipelineOptions {
  // Reuse genotype_backbone.txt and backbone_ckpt.bin when both exist.
  bool resume = false;
};

struct PipelineResult {
  Genotype backbone;
  Genotype head;
  std::unique_ptr<Detector> detector;
  bool resumed = false;
};

PipelineResult RunFsdNas(std::span<const DetectionSample> data,
                         const RunConfig& cfg,
                         const std::filesystem::path& out_dir,
                         const PipelineOptions& options = {});

enum class EvalTask { kBinary, kMulticlass };
std::optional<EvalTask> ParseTask(std::string_view name);

// Binary evaluation folds every class into class 1.
EvalSet ApplyTask(EvalSet set, EvalTask task);

std::vector<ImageDetections> Predict(const Detector& detector,
                                     std::span<const DetectionSample> data);

// Predictions, relation file and metrics report (IoU and IoBB records) for
// `data`, written into out_dir. Returns the IoU and IoBB reports.
std::vector<MetricsReport> EvaluateAndExport(
    const Detector& detector, std::span<const DetectionSample> data,
    const RunConfig& cfg, EvalTask task, const std::filesystem::path& out_dir);

// Writes the relations of every image of `data` to `path`.
void ExportDetectorRelations(const Detector& detector,
                             std::span<const DetectionSample> data,
                             const std::filesystem::path& path);

std::vector<std::string> TaskClassNames(const RunConfig& cfg, EvalTask task);

}  // namespace fsd

#endif  // FSD_PIPELINE_H_
