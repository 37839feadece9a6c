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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fsd/metrics.h"
#include "fsd/pipeline.h"
#include "fsd/supernet.h"
#include "fsd/synthdata.h"
#include "test_util.h"

namespace fsd {
namespace {

namespace fs = std::filesystem;
using testing::ReadFile;
using testing::TempDir;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome RunCli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::Run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

// Unsets FSD_SEED for the duration of a test unless a value is given.
class SeedEnv {
 public:
  explicit SeedEnv(const char* value = nullptr) {
    if (value) {
      setenv("FSD_SEED", value, 1);
    } else {
      unsetenv("FSD_SEED");
    }
  }
  ~SeedEnv() { unsetenv("FSD_SEED"); }
};

constexpr const char* kTinyConfig =
    "data.image_size = 32\n"
    "data.num_train = 6\n"
    "data.num_val = 4\n"
    "data.lesions_max = 2\n"
    "data.radius_min = 3\n"
    "data.radius_max = 6\n"
    "model.channels = 4\n"
    "model.num_stages = 1\n"
    "model.cells_per_stage = 1\n"
    "model.bone_nodes = 2\n"
    "model.head_nodes = 2\n"
    "model.head_cells = 1\n"
    "model.fc_dim = 16\n"
    "model.roi_size = 4\n"
    "anchor.stride = 4\n"
    "anchor.ratios = 1\n"
    "anchor.scales = 2,3\n"
    "rpn.batch_per_image = 16\n"
    "rpn.pre_nms_train = 64\n"
    "rpn.post_nms_train = 8\n"
    "rpn.pre_nms_test = 64\n"
    "head.rois_per_image = 8\n"
    "head.max_detections = 10\n"
    "search.epochs = 1\n"
    "search.batch_size = 2\n"
    "search.bone_finetune_epochs = 1\n"
    "train.epochs = 1\n"
    "train.warmup_iters = 2\n";

fs::path WriteConfig(const fs::path& dir) {
  const fs::path p = dir / "tiny.cfg";
  std::ofstream(p) << kTinyConfig;
  return p;
}

TEST(CliTest, HelpExitsZeroAndListsSubcommands) {
  const Outcome o = RunCli({"--help"});
  EXPECT_EQ(o.code, cli::kExitOk);
  for (const char* sub :
       {"gen-data", "search-backbone", "search-head", "derive", "train", "eval",
        "export-relations", "run-all"}) {
    EXPECT_NE(o.out.find(sub), std::string::npos) << sub;
  }
}

TEST(CliTest, EverySubcommandHelpPrintsCommonFlags) {
  for (const char* sub :
       {"gen-data", "search-backbone", "search-head", "derive", "train", "eval",
        "export-relations", "run-all"}) {
    const Outcome o = RunCli({sub, "--help"});
    EXPECT_EQ(o.code, cli::kExitOk) << sub;
    for (const char* flag : {"--config", "--seed", "--out"}) {
      EXPECT_NE(o.out.find(flag), std::string::npos) << sub << " " << flag;
    }
  }
  const Outcome ev = RunCli({"eval", "--help"});
  EXPECT_NE(ev.out.find("--criterion"), std::string::npos);
  EXPECT_NE(ev.out.find("--task"), std::string::npos);
}

TEST(CliTest, UsageErrorsExitOne) {
  const Outcome none = RunCli({});
  EXPECT_EQ(none.code, cli::kExitUsage);

  const Outcome unknown = RunCli({"frobnicate"});
  EXPECT_EQ(unknown.code, cli::kExitUsage);
  EXPECT_TRUE(unknown.out.empty());
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos) << unknown.err;

  const Outcome flag = RunCli({"gen-data", "--out", "x", "--bogus"});
  EXPECT_EQ(flag.code, cli::kExitUsage);
  EXPECT_FALSE(flag.err.empty());

  const Outcome criterion =
      RunCli({"eval", "--predictions", "p", "--criterion", "giou"});
  EXPECT_EQ(criterion.code, cli::kExitUsage);
}

TEST(CliTest, BadConfigIsAUsageError) {
  SeedEnv env;
  TempDir dir("cli_bad_config");
  const fs::path cfg = dir.path() / "bad.cfg";
  std::ofstream(cfg) << "bogus.key = 1\n";
  const Outcome o = RunCli({"gen-data", "--config", cfg.string(), "--out",
                            (dir.path() / "d").string()});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("config line 1"), std::string::npos) << o.err;
}

TEST(CliTest, RuntimeFailuresExitTwo) {
  SeedEnv env;
  TempDir dir("cli_runtime");
  const fs::path garbage = dir.path() / "garbage.tsv";
  std::ofstream(garbage) << "not an alpha table\n";
  const Outcome o = RunCli({"derive", "--alpha", garbage.string()});
  EXPECT_EQ(o.code, cli::kExitFailure);
  EXPECT_NE(o.err.find("error:"), std::string::npos);
  const Outcome missing =
      RunCli({"derive", "--alpha", (dir.path() / "missing.tsv").string()});
  EXPECT_EQ(missing.code, cli::kExitUsage);
}

TEST(CliTest, GenDataIsDeterministic) {
  SeedEnv env;
  TempDir dir("cli_gen");
  const std::string cfg = WriteConfig(dir.path()).string();
  const fs::path a = dir.path() / "a", b = dir.path() / "b";
  ASSERT_EQ(
      RunCli({"gen-data", "--config", cfg, "--seed", "4", "--out", a.string()})
          .code,
      cli::kExitOk);
  ASSERT_EQ(
      RunCli({"gen-data", "--config", cfg, "--seed", "4", "--out", b.string()})
          .code,
      cli::kExitOk);
  EXPECT_EQ(ReadFile(a / "train.manifest"), ReadFile(b / "train.manifest"));
  EXPECT_EQ(ReadFile(a / "val.manifest"), ReadFile(b / "val.manifest"));
  for (const auto& entry : fs::directory_iterator(a / "train")) {
    EXPECT_EQ(ReadFile(entry.path()),
              ReadFile(b / "train" / entry.path().filename()));
  }
}

TEST(CliTest, SeedEnvironmentVariableOverridesFlag) {
  TempDir dir("cli_env");
  const std::string cfg = WriteConfig(dir.path()).string();
  const fs::path flag2 = dir.path() / "flag2", env2 = dir.path() / "env2",
                 flag1 = dir.path() / "flag1";
  {
    SeedEnv env;
    ASSERT_EQ(RunCli({"gen-data", "--config", cfg, "--seed", "2", "--out",
                      flag2.string()})
                  .code,
              cli::kExitOk);
    ASSERT_EQ(RunCli({"gen-data", "--config", cfg, "--seed", "1", "--out",
                      flag1.string()})
                  .code,
              cli::kExitOk);
  }
  {
    SeedEnv env("2");
    ASSERT_EQ(RunCli({"gen-data", "--config", cfg, "--seed", "1", "--out",
                      env2.string()})
                  .code,
              cli::kExitOk);
  }
  EXPECT_EQ(ReadFile(env2 / "train.manifest"),
            ReadFile(flag2 / "train.manifest"));
  EXPECT_NE(ReadFile(flag1 / "train.manifest"),
            ReadFile(flag2 / "train.manifest"));
}

TEST(CliTest, MalformedSeedEnvironmentIsAUsageError) {
  SeedEnv env("seven");
  TempDir dir("cli_env_bad");
  const Outcome o = RunCli({"gen-data", "--out", (dir.path() / "d").string()});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("FSD_SEED"), std::string::npos);
}

TEST(CliTest, DeriveMatchesDirectDerivation) {
  SeedEnv env;
  TempDir dir("cli_derive");
  CellSpec spec;
  spec.num_nodes = 3;
  spec.space = OpSpace::kHead;
  const ArchParams alpha = InitAlpha(spec, 0.5, 13);
  const fs::path tsv = dir.path() / "alpha_head.tsv";
  SaveAlphaTsv(tsv, alpha);
  const fs::path out = dir.path() / "out";
  const Outcome o =
      RunCli({"derive", "--alpha", tsv.string(), "--out", out.string()});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  const Genotype direct = DeriveGenotype(LoadAlphaTsv(tsv));
  EXPECT_EQ(o.out, FormatGenotype(direct));
  EXPECT_EQ(ReadFile(out / artifacts::kGenotypeHead), FormatGenotype(direct));
}

TEST(CliTest, EvalOnPerfectPredictionsPrintsOne) {
  SeedEnv env;
  TempDir dir("cli_perfect");
  const std::string cfg = WriteConfig(dir.path()).string();
  const fs::path data = dir.path() / "data";
  ASSERT_EQ(RunCli({"gen-data", "--config", cfg, "--out", data.string()}).code,
            cli::kExitOk);
  const auto samples = LoadDataset(data / "val.manifest");
  std::vector<ImageDetections> perfect;
  for (const auto& s : samples) {
    ImageDetections d{s.id, {}};
    for (size_t k = 0; k < s.gt_boxes.size(); ++k) {
      d.detections.push_back({s.gt_boxes[k], s.gt_labels[k], 1.0});
    }
    perfect.push_back(d);
  }
  const fs::path preds = dir.path() / "perfect.txt";
  WritePredictions(preds, perfect);
  for (const char* criterion : {"iou", "iobb"}) {
    const Outcome o =
        RunCli({"eval", "--config", cfg, "--data", data.string(),
                "--predictions", preds.string(), "--criterion", criterion});
    ASSERT_EQ(o.code, cli::kExitOk) << o.err;
    const auto at = o.out.find("mAP@[.5:.95]");
    ASSERT_NE(at, std::string::npos) << o.out;
    const std::string line = o.out.substr(at, o.out.find('\n', at) - at);
    EXPECT_NE(line.find("1.000"), std::string::npos) << line;
  }
}

TEST(CliTest, EvalRequiresAPredictionSource) {
  SeedEnv env;
  const Outcome o = RunCli({"eval"});
  EXPECT_EQ(o.code, cli::kExitUsage);
}

TEST(CliTest, RunAllEmitsStageArtifactsAndIsRepeatable) {
  SeedEnv env;
  TempDir dir("cli_run_all");
  const std::string cfg = WriteConfig(dir.path()).string();
  const fs::path a = dir.path() / "a", b = dir.path() / "b";
  const Outcome first =
      RunCli({"run-all", "--config", cfg, "--seed", "8", "--out", a.string()});
  ASSERT_EQ(first.code, cli::kExitOk) << first.err;
  ASSERT_EQ(
      RunCli({"run-all", "--config", cfg, "--seed", "8", "--out", b.string()})
          .code,
      cli::kExitOk);
  for (const char* name :
       {artifacts::kAlphaBone, artifacts::kGenotypeBackbone,
        artifacts::kAlphaHead, artifacts::kGenotypeHead, artifacts::kFinalCkpt,
        artifacts::kMetrics, artifacts::kPredictions}) {
    EXPECT_TRUE(fs::exists(a / name)) << name;
  }
  EXPECT_EQ(ReadFile(a / artifacts::kGenotypeBackbone),
            ReadFile(b / artifacts::kGenotypeBackbone));
  EXPECT_EQ(ReadFile(a / artifacts::kGenotypeHead),
            ReadFile(b / artifacts::kGenotypeHead));
  EXPECT_NE(first.out.find("mAP@[.5:.95]"), std::string::npos);
}

TEST(CliTest, StagewiseCommandsChain) {
  SeedEnv env;
  TempDir dir("cli_stages");
  const std::string cfg = WriteConfig(dir.path()).string();
  const fs::path data = dir.path() / "data", run = dir.path() / "run";
  const std::string r = run.string();
  ASSERT_EQ(RunCli({"gen-data", "--config", cfg, "--out", data.string()}).code,
            cli::kExitOk);
  const Outcome sb = RunCli({"search-backbone", "--config", cfg, "--data",
                             data.string(), "--out", r});
  ASSERT_EQ(sb.code, cli::kExitOk) << sb.err;
  const Outcome sh =
      RunCli({"search-head", "--config", cfg, "--data", data.string(),
              "--backbone-genotype",
              (run / artifacts::kGenotypeBackbone).string(), "--backbone-ckpt",
              (run / artifacts::kBackboneCkpt).string(), "--out", r});
  ASSERT_EQ(sh.code, cli::kExitOk) << sh.err;
  const std::string bone = (run / artifacts::kGenotypeBackbone).string();
  const std::string head = (run / artifacts::kGenotypeHead).string();
  const Outcome tr = RunCli(
      {"train", "--config", cfg, "--data", data.string(), "--backbone-genotype",
       bone, "--head-genotype", head, "--backbone-ckpt",
       (run / artifacts::kBackboneCkpt).string(), "--head-ckpt",
       (run / artifacts::kHeadCkpt).string(), "--out", r});
  ASSERT_EQ(tr.code, cli::kExitOk) << tr.err;
  const std::string ckpt = (run / artifacts::kFinalCkpt).string();
  const Outcome ev =
      RunCli({"eval", "--config", cfg, "--data", data.string(),
              "--backbone-genotype", bone, "--head-genotype", head,
              "--checkpoint", ckpt, "--task", "binary", "--out", r});
  ASSERT_EQ(ev.code, cli::kExitOk) << ev.err;
  EXPECT_TRUE(fs::exists(run / artifacts::kMetrics));
  const Outcome rel =
      RunCli({"export-relations", "--config", cfg, "--data", data.string(),
              "--backbone-genotype", bone, "--head-genotype", head,
              "--checkpoint", ckpt, "--out", r});
  ASSERT_EQ(rel.code, cli::kExitOk) << rel.err;
  EXPECT_TRUE(fs::exists(run / artifacts::kRelations));
}

}  // namespace
}  // namespace fsd
