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

#include "fsd/run_config.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "fsd/rng.h"

namespace fsd {
namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double ToDouble(const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  return out;
}

int64_t ToInt(const std::string& v) {
  int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  return out;
}

uint64_t ToU64(const std::string& v) {
  uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + v +
                                "'");
  }
  return out;
}

bool ToBool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::vector<double> ToList(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ToDouble(Trim(item)));
  if (out.empty()) throw std::invalid_argument("expected a list of numbers");
  return out;
}

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Prefer the shortest spelling that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

std::string List(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + Num(v[i]);
  return out;
}

std::string Bool(bool b) { return b ? "true" : "false"; }

struct Key {
  std::string name;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FSD_INT(key, field, doc)                                   \
  Key {                                                            \
    key, doc,                                                      \
        [](RunConfig& c, const std::string& v) {                   \
          c.field = static_cast<decltype(c.field)>(ToInt(v));      \
        },                                                         \
        [](const RunConfig& c) { return std::to_string(c.field); } \
  }
#define FSD_DBL(key, field, doc)                                           \
  Key {                                                                    \
    key, doc,                                                              \
        [](RunConfig& c, const std::string& v) { c.field = ToDouble(v); }, \
        [](const RunConfig& c) { return Num(c.field); }                    \
  }
#define FSD_BOOL(key, field, doc)                                              \
  Key {                                                                        \
    key, doc, [](RunConfig& c, const std::string& v) { c.field = ToBool(v); }, \
        [](const RunConfig& c) { return Bool(c.field); }                       \
  }
#define FSD_LIST(key, field, doc)                                              \
  Key {                                                                        \
    key, doc, [](RunConfig& c, const std::string& v) { c.field = ToList(v); }, \
        [](const RunConfig& c) { return List(c.field); }                       \
  }

const std::vector<Key>& Keys() {
  static const std::vector<Key> keys = {
      Key{"seed", "master seed for data, initialization and sampling",
          [](RunConfig& c, const std::string& v) { c.SetSeed(ToU64(v)); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
      FSD_INT("data.image_size", data.image_size,
              "square image side in pixels (full-scale reference: 512)"),
      FSD_INT("data.num_train", data.num_train, "training images"),
      FSD_INT("data.num_val", data.num_val, "held-out validation images"),
      FSD_INT("data.num_classes", data.num_classes,
              "lesion classes; 1 is the binary task"),
      FSD_INT("data.lesions_min", data.lesions_min, "fewest lesions per image"),
      FSD_INT("data.lesions_max", data.lesions_max, "most lesions per image"),
      FSD_DBL("data.radius_min", data.radius_min, "smallest semi-axis, pixels"),
      FSD_DBL("data.radius_max", data.radius_max, "largest semi-axis, pixels"),
      FSD_DBL("data.noise_sigma", data.noise_sigma, "background noise sigma"),
      Key{"data.style", "blob or ring",
          [](RunConfig& c, const std::string& v) {
            const auto s = ParseStyle(v);
            if (!s) {
              throw std::invalid_argument("expected blob or ring, got '" + v +
                                          "'");
            }
            c.data.style = *s;
          },
          [](const RunConfig& c) {
            return std::string(StyleName(c.data.style));
          }},
      FSD_BOOL("data.cooccur", data.cooccur,
               "all lesions of an image share one class"),
      FSD_INT("model.channels", model.channels, "backbone and head width C"),
      FSD_INT("model.num_stages", model.num_stages,
              "backbone stages; feature stride is 4 * 2^(stages - 1)"),
      FSD_INT("model.cells_per_stage", model.cells_per_stage,
              "stacked cells per backbone stage"),
      FSD_INT("model.bone_nodes", model.bone_nodes,
              "intermediate nodes per backbone cell"),
      FSD_INT("model.head_nodes", model.head_nodes,
              "intermediate nodes per head cell"),
      FSD_INT("model.head_cells", model.head_cells, "stacked head cells"),
      FSD_INT("model.fc_dim", model.fc_dim, "width of the FC baseline head"),
      FSD_INT("model.roi_size", model.roi_size, "ROI grid side"),
      FSD_LIST("anchor.ratios", model.anchor.ratios, "anchor aspect ratios"),
      FSD_LIST("anchor.scales", model.anchor.scales,
               "anchor scales as multiples of the anchor base"),
      FSD_INT("anchor.stride", model.anchor.stride, "feature stride in pixels"),
      FSD_INT("anchor.base", model.anchor.base,
              "anchor base size in pixels; 0 uses the stride"),
      FSD_INT("rpn.batch_per_image", model.rpn_batch_per_image,
              "sampled anchors per image"),
      FSD_DBL("rpn.pos_fraction", model.rpn_pos_fraction,
              "largest positive share of sampled anchors"),
      FSD_DBL("rpn.pos_iou", model.rpn_pos_iou, "positive anchor IoU"),
      FSD_DBL("rpn.neg_iou", model.rpn_neg_iou, "negative anchor IoU"),
      FSD_INT("rpn.pre_nms_train", model.rpn_pre_nms_train,
              "proposals kept before NMS in training"),
      FSD_INT("rpn.post_nms_train", model.rpn_post_nms_train,
              "proposals kept after NMS in training"),
      FSD_INT("rpn.pre_nms_test", model.rpn_pre_nms_test,
              "proposals kept before NMS at inference"),
      FSD_DBL("rpn.nms_iou", model.rpn_nms_iou, "proposal NMS IoU"),
      FSD_INT("head.rois_per_image", model.rois_per_image,
              "ROIs per image (training samples and inference proposals)"),
      FSD_DBL("head.fg_fraction", model.roi_fg_fraction,
              "largest foreground share of sampled ROIs"),
      FSD_DBL("head.fg_iou", model.head_fg_iou, "foreground ROI IoU"),
      FSD_BOOL("head.class_agnostic", model.class_agnostic_reg,
               "one box regressor shared by all classes"),
      FSD_DBL("head.smooth_l1_beta", model.smooth_l1_beta,
              "smooth-L1 transition point"),
      FSD_DBL("head.score_thresh", model.score_thresh,
              "detections need a score above this"),
      FSD_DBL("head.nms_iou", model.test_nms_iou, "per-class NMS IoU"),
      FSD_INT("head.max_detections", model.max_detections,
              "detections kept per image"),
      FSD_BOOL("graph.enabled", model.graph_enabled,
               "region graph before the classifier"),
      FSD_BOOL("graph.normalize", model.graph_normalize,
               "build the adjacency from L2-normalized features"),
      FSD_DBL("graph.sigma_gain", model.graph_sigma_gain,
              "initial sigma = gain * I"),
      FSD_INT("search.epochs", search.epochs, "epochs per search stage"),
      FSD_DBL("search.w_lr", search.w_lr, "weight learning rate per image"),
      FSD_DBL("search.w_momentum", search.w_momentum, "weight SGD momentum"),
      FSD_DBL("search.w_decay", search.w_decay, "weight decay"),
      FSD_DBL("search.alpha_lr", search.alpha_lr,
              "architecture learning rate per image"),
      FSD_DBL("search.alpha_decay", search.alpha_decay,
              "architecture weight decay"),
      FSD_DBL("search.alpha_beta1", search.alpha_betas.first, "Adam beta1"),
      FSD_DBL("search.alpha_beta2", search.alpha_betas.second, "Adam beta2"),
      FSD_DBL("search.cosine_floor", search.cosine_floor,
              "final weight learning rate per image"),
      FSD_DBL("search.warmup_fraction", search.warmup_fraction,
              "share of epochs with alpha frozen"),
      FSD_INT("search.batch_size", search.batch_size, "images per step"),
      FSD_DBL("search.alpha_noise", search.alpha_noise,
              "half-width of the uniform alpha initialization"),
      FSD_BOOL("search.unrolled", search.unrolled,
               "finite-difference unrolled hypergradient"),
      FSD_INT("search.bone_finetune_epochs", bone_finetune_epochs,
              "training epochs for the derived backbone before head search"),
      FSD_INT("train.epochs", train.epochs, "final training epochs"),
      FSD_DBL("train.lr", train.lr, "learning rate per image"),
      FSD_DBL("train.momentum", train.momentum, "SGD momentum"),
      FSD_DBL("train.weight_decay", train.weight_decay, "weight decay"),
      FSD_INT("train.batch_size", train.batch_size, "images per step"),
      FSD_INT("train.warmup_iters", train.warmup_iters, "linear warmup steps"),
      FSD_LIST("train.milestones", train.milestones,
               "decay points as fractions of all steps"),
      FSD_DBL("train.gamma", train.gamma, "decay factor per milestone"),
      FSD_LIST("eval.fppi_points", eval.fppi_points,
               "false positives per image at which sensitivity is reported"),
      FSD_DBL("eval.match_threshold", eval.match_threshold,
              "overlap threshold for sensitivity"),
  };
  return keys;
}

#undef FSD_INT
#undef FSD_DBL
#undef FSD_BOOL
#undef FSD_LIST

}  // namespace

void RunConfig::SetSeed(uint64_t s) {
  seed = s;
  data.seed = DeriveSeed(s, {0x64617461});
  search.seed = DeriveSeed(s, {0x73726368});
  train.seed = DeriveSeed(s, {0x7472616e});
}

void RunConfig::Validate() const {
  data.Validate();
  model.Validate();
  search.Validate();
  train.Validate();
  if (bone_finetune_epochs < 0) {
    throw std::invalid_argument("search.bone_finetune_epochs must be >= 0");
  }
  if (model.num_classes != data.num_classes) {
    throw std::invalid_argument("data.num_classes and the detector disagree");
  }
  if (eval.fppi_points.empty()) {
    throw std::invalid_argument("eval.fppi_points must not be empty");
  }
}

std::vector<ConfigKeyInfo> ConfigKeys() {
  const RunConfig defaults;
  std::vector<ConfigKeyInfo> out;
  for (const Key& k : Keys()) out.push_back({k.name, k.get(defaults), k.doc});
  return out;
}

RunConfig ParseConfig(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = Trim(line);
    if (body.empty()) continue;
    const auto where = "config line " + std::to_string(line_no) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(where + "expected key = value");
    }
    const std::string key = Trim(std::string_view(body).substr(0, eq));
    const std::string value = Trim(std::string_view(body).substr(eq + 1));
    const Key* match = nullptr;
    for (const Key& k : Keys()) {
      if (k.name == key) match = &k;
    }
    if (!match)
      throw std::invalid_argument(where + "unknown key '" + key + "'");
    try {
      match->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + key + ": " + e.what());
    }
  }
  cfg.model.num_classes = cfg.data.num_classes;
  cfg.Validate();
  return cfg;
}

RunConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return ParseConfig(os.str());
}

std::string FormatConfig(const RunConfig& cfg) {
  std::string out;
  for (const Key& k : Keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace fsd
