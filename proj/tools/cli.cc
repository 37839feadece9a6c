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

#include "cli.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "fsd/checkpoint.h"
#include "fsd/metrics.h"
#include "fsd/pipeline.h"
#include "fsd/run_config.h"
#include "fsd/search.h"
#include "fsd/supernet.h"
#include "fsd/synthdata.h"

namespace fsd::cli {
namespace {

namespace fs = std::filesystem;

// Raised for bad configuration input; maps to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
};

void AddCommon(CLI::App* cmd, CommonFlags& f, bool out_required) {
  cmd->add_option("--config", f.config, "key = value run configuration")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed,
                  "master seed (the FSD_SEED environment variable wins)");
  auto* out = cmd->add_option("--out", f.out, "output directory");
  if (out_required) out->required();
}

RunConfig ResolveConfig(const CommonFlags& f) {
  RunConfig cfg;
  try {
    if (!f.config.empty()) cfg = LoadConfig(f.config);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::optional<uint64_t> seed = f.seed;
  if (const char* env = std::getenv("FSD_SEED"); env && *env) {
    try {
      size_t used = 0;
      seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("FSD_SEED is not an integer: ") + env);
    }
  }
  if (seed) cfg.SetSeed(*seed);
  return cfg;
}

std::vector<DetectionSample> LoadSplit(const RunConfig& cfg,
                                       const std::string& data_dir,
                                       Split split) {
  if (data_dir.empty()) return GenerateSplit(cfg.data, split);
  const char* name = split == Split::kTrain ? "train.manifest" : "val.manifest";
  return LoadDataset(fs::path(data_dir) / name);
}

std::unique_ptr<Detector> LoadDetector(const RunConfig& cfg,
                                       const std::string& bone_path,
                                       const std::string& head_path,
                                       const std::string& ckpt_path) {
  auto det =
      BuildFinalDetector(cfg, LoadGenotype(bone_path), LoadGenotype(head_path));
  RestoreInto(LoadCheckpoint(ckpt_path), det->WeightParams());
  return det;
}

EvalTask ResolveTask(const std::string& name) { return *ParseTask(name); }

void PrintGenotype(std::ostream& out, const Genotype& g) {
  out << FormatGenotype(g);
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{
      "fsd: differentiable architecture search for a two-stage "
      "lesion detector",
      "fsd"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  const std::vector<std::string> criteria = {"iou", "iobb"};
  const std::vector<std::string> tasks = {"binary", "multiclass"};

  // gen-data
  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  AddCommon(gen, gen_flags, true);

  // search-backbone
  CommonFlags sb_flags;
  std::string sb_data;
  auto* sb = app.add_subcommand("search-backbone",
                                "search the backbone cell and derive it");
  AddCommon(sb, sb_flags, true);
  sb->add_option("--data", sb_data,
                 "dataset directory (generated in memory when absent)");

  // search-head
  CommonFlags sh_flags;
  std::string sh_data, sh_geno, sh_ckpt;
  auto* sh = app.add_subcommand(
      "search-head", "search the head cell on a frozen derived backbone");
  AddCommon(sh, sh_flags, true);
  sh->add_option("--data", sh_data, "dataset directory");
  sh->add_option("--backbone-genotype", sh_geno, "backbone genotype file")
      ->required()
      ->check(CLI::ExistingFile);
  sh->add_option("--backbone-ckpt", sh_ckpt, "backbone checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  // derive
  CommonFlags dv_flags;
  std::string dv_alpha;
  auto* dv = app.add_subcommand("derive", "derive a genotype from alpha");
  AddCommon(dv, dv_flags, false);
  dv->add_option("--alpha", dv_alpha, "alpha TSV")
      ->required()
      ->check(CLI::ExistingFile);

  // train
  CommonFlags tr_flags;
  std::string tr_data, tr_bone, tr_head, tr_bone_ckpt, tr_head_ckpt;
  auto* tr = app.add_subcommand("train", "train the assembled detector");
  AddCommon(tr, tr_flags, true);
  tr->add_option("--data", tr_data, "dataset directory");
  tr->add_option("--backbone-genotype", tr_bone, "backbone genotype file")
      ->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--head-genotype", tr_head, "head genotype file")
      ->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--backbone-ckpt", tr_bone_ckpt, "initial backbone weights")
      ->check(CLI::ExistingFile);
  tr->add_option("--head-ckpt", tr_head_ckpt, "initial head weights")
      ->check(CLI::ExistingFile);

  // eval
  CommonFlags ev_flags;
  std::string ev_data, ev_manifest, ev_pred, ev_bone, ev_head, ev_ckpt;
  std::string ev_criterion = "iou", ev_task = "multiclass";
  auto* ev = app.add_subcommand(
      "eval", "score predictions (or a checkpoint) on the validation split");
  AddCommon(ev, ev_flags, false);
  ev->add_option("--data", ev_data, "dataset directory (uses val.manifest)");
  ev->add_option("--manifest", ev_manifest, "ground-truth manifest")
      ->check(CLI::ExistingFile);
  ev->add_option("--predictions", ev_pred, "prediction dump")
      ->check(CLI::ExistingFile);
  ev->add_option("--backbone-genotype", ev_bone, "backbone genotype file")
      ->check(CLI::ExistingFile);
  ev->add_option("--head-genotype", ev_head, "head genotype file")
      ->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", ev_ckpt, "trained detector checkpoint")
      ->check(CLI::ExistingFile);
  ev->add_option("--criterion", ev_criterion, "iou or iobb")
      ->check(CLI::IsMember(criteria));
  ev->add_option("--task", ev_task, "binary or multiclass")
      ->check(CLI::IsMember(tasks));

  // export-relations
  CommonFlags rel_flags;
  std::string rel_data, rel_bone, rel_head, rel_ckpt;
  auto* rel = app.add_subcommand(
      "export-relations", "write region-graph relations of the val split");
  AddCommon(rel, rel_flags, true);
  rel->add_option("--data", rel_data, "dataset directory");
  rel->add_option("--backbone-genotype", rel_bone, "backbone genotype file")
      ->required()
      ->check(CLI::ExistingFile);
  rel->add_option("--head-genotype", rel_head, "head genotype file")
      ->required()
      ->check(CLI::ExistingFile);
  rel->add_option("--checkpoint", rel_ckpt, "trained detector checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  // run-all
  CommonFlags ra_flags;
  std::string ra_data, ra_task = "multiclass";
  bool ra_resume = false;
  auto* ra = app.add_subcommand(
      "run-all", "search, derive, train and evaluate end to end");
  AddCommon(ra, ra_flags, true);
  ra->add_option("--data", ra_data,
                 "dataset directory (generated under --out when absent)");
  ra->add_option("--task", ra_task, "binary or multiclass")
      ->check(CLI::IsMember(tasks));
  ra->add_flag("--resume", ra_resume,
               "reuse an existing backbone genotype and checkpoint");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    CLI::App* failing = &app;
    for (CLI::App* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = ResolveConfig(gen_flags);
      const GeneratedDataset ds = GenerateDataset(cfg.data, gen_flags.out);
      out << "train: " << ds.train.records.size() << " lesions -> "
          << ds.train_manifest.string() << "\n"
          << "val: " << ds.val.records.size() << " lesions -> "
          << ds.val_manifest.string() << "\n";
    } else if (sb->parsed()) {
      const RunConfig cfg = ResolveConfig(sb_flags);
      fs::create_directories(sb_flags.out);
      const auto data = LoadSplit(cfg, sb_data, Split::kTrain);
      JsonlLogger log(fs::path(sb_flags.out) / artifacts::kSearchLog, false);
      const BackboneStage stage =
          RunBackboneStage(data, cfg, sb_flags.out, log.AsLogger());
      PrintGenotype(out, stage.genotype);
    } else if (sh->parsed()) {
      const RunConfig cfg = ResolveConfig(sh_flags);
      fs::create_directories(sh_flags.out);
      const auto data = LoadSplit(cfg, sh_data, Split::kTrain);
      JsonlLogger log(fs::path(sh_flags.out) / artifacts::kSearchLog, true);
      const HeadStage stage =
          RunHeadStage(data, cfg, LoadGenotype(sh_geno),
                       LoadCheckpoint(sh_ckpt), sh_flags.out, log.AsLogger());
      PrintGenotype(out, stage.genotype);
    } else if (dv->parsed()) {
      ResolveConfig(dv_flags);
      const ArchParams alpha = LoadAlphaTsv(dv_alpha);
      const Genotype g = DeriveGenotype(alpha);
      if (!dv_flags.out.empty()) {
        fs::create_directories(dv_flags.out);
        SaveGenotype(
            fs::path(dv_flags.out) / (alpha.space == OpSpace::kHead
                                          ? artifacts::kGenotypeHead
                                          : artifacts::kGenotypeBackbone),
            g);
      }
      PrintGenotype(out, g);
    } else if (tr->parsed()) {
      const RunConfig cfg = ResolveConfig(tr_flags);
      fs::create_directories(tr_flags.out);
      const auto data = LoadSplit(cfg, tr_data, Split::kTrain);
      JsonlLogger log(fs::path(tr_flags.out) / artifacts::kSearchLog, true);
      RunFinalStage(data, cfg, LoadGenotype(tr_bone), LoadGenotype(tr_head),
                    tr_bone_ckpt.empty() ? std::vector<NamedTensor>{}
                                         : LoadCheckpoint(tr_bone_ckpt),
                    tr_head_ckpt.empty() ? std::vector<NamedTensor>{}
                                         : LoadCheckpoint(tr_head_ckpt),
                    tr_flags.out, log.AsLogger());
      out << "wrote "
          << (fs::path(tr_flags.out) / artifacts::kFinalCkpt).string() << "\n";
    } else if (ev->parsed()) {
      const RunConfig cfg = ResolveConfig(ev_flags);
      const std::vector<DetectionSample> data =
          ev_manifest.empty() ? LoadSplit(cfg, ev_data, Split::kVal)
                              : LoadDataset(ev_manifest);
      std::vector<ImageDetections> predictions;
      if (!ev_pred.empty()) {
        predictions = ReadPredictions(ev_pred);
      } else if (!ev_ckpt.empty() && !ev_bone.empty() && !ev_head.empty()) {
        predictions =
            Predict(*LoadDetector(cfg, ev_bone, ev_head, ev_ckpt), data);
      } else {
        throw UsageError(
            "eval needs --predictions, or --checkpoint with both genotypes");
      }
      const EvalTask task = ResolveTask(ev_task);
      const EvalSet set = ApplyTask(BuildEvalSet(data, predictions), task);
      const MetricsReport report =
          PerClassReport(set, *ParseCriterion(ev_criterion),
                         cfg.eval.fppi_points, cfg.eval.match_threshold);
      const auto names = TaskClassNames(cfg, task);
      out << FormatReportTable(std::span(&report, 1), names);
      if (!ev_flags.out.empty()) {
        fs::create_directories(ev_flags.out);
        std::ofstream f(fs::path(ev_flags.out) / artifacts::kMetrics);
        f << FormatReportRecords(std::span(&report, 1), names);
      }
    } else if (rel->parsed()) {
      const RunConfig cfg = ResolveConfig(rel_flags);
      fs::create_directories(rel_flags.out);
      const auto data = LoadSplit(cfg, rel_data, Split::kVal);
      const auto det = LoadDetector(cfg, rel_bone, rel_head, rel_ckpt);
      const fs::path path = fs::path(rel_flags.out) / artifacts::kRelations;
      ExportDetectorRelations(*det, data, path);
      out << "wrote " << path.string() << "\n";
    } else if (ra->parsed()) {
      const RunConfig cfg = ResolveConfig(ra_flags);
      const fs::path root(ra_flags.out);
      fs::create_directories(root);
      std::string data_dir = ra_data;
      if (data_dir.empty()) {
        data_dir = (root / "data").string();
        GenerateDataset(cfg.data, data_dir);
      }
      const auto train = LoadSplit(cfg, data_dir, Split::kTrain);
      const auto val = LoadSplit(cfg, data_dir, Split::kVal);
      PipelineOptions options;
      options.resume = ra_resume;
      const PipelineResult result = RunFsdNas(train, cfg, root, options);
      out << "backbone genotype:\n"
          << FormatGenotype(result.backbone) << "head genotype:\n"
          << FormatGenotype(result.head);
      const EvalTask task = ResolveTask(ra_task);
      const auto reports =
          EvaluateAndExport(*result.detector, val, cfg, task, root);
      out << FormatReportTable(reports, TaskClassNames(cfg, task));
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace fsd::cli
