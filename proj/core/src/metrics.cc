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

#include "fsd/metrics.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace fsd {
namespace {

// Indices of dets in descending score order; ties keep input order.
std::vector<size_t> ScoreOrder(std::span<const EvalDetection> dets) {
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

std::string FormatDouble(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string ClassLabel(int id, std::span<const std::string> names) {
  if (id >= 1 && id <= static_cast<int>(names.size())) return names[id - 1];
  return "class" + std::to_string(id);
}

}  // namespace

std::string_view CriterionName(OverlapCriterion c) {
  return c == OverlapCriterion::kIoU ? "iou" : "iobb";
}

std::optional<OverlapCriterion> ParseCriterion(std::string_view name) {
  if (name == "iou") return OverlapCriterion::kIoU;
  if (name == "iobb") return OverlapCriterion::kIoBB;
  return std::nullopt;
}

double Overlap(OverlapCriterion c, const Box& det, const Box& gt) {
  return c == OverlapCriterion::kIoU ? IoU(det, gt) : IoBB(det, gt);
}

std::vector<int> EvalSet::GtClasses() const {
  std::set<int> s;
  for (const auto& g : ground_truth) s.insert(g.class_id);
  return {s.begin(), s.end()};
}

std::vector<double> RangeThresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

std::vector<double> DefaultFppiPoints() { return {0.5, 1, 2, 4, 8, 16}; }

std::vector<bool> MatchDetections(std::span<const EvalDetection> dets,
                                  std::span<const EvalGroundTruth> gts,
                                  OverlapCriterion c, double threshold) {
  std::unordered_map<int64_t, std::vector<size_t>> by_image;
  for (size_t g = 0; g < gts.size(); ++g) by_image[gts[g].image].push_back(g);
  std::vector<char> used(gts.size(), 0);
  std::vector<bool> tp(dets.size(), false);
  for (size_t d : ScoreOrder(dets)) {
    const auto it = by_image.find(dets[d].image);
    if (it == by_image.end()) continue;
    double best = -1.0;
    size_t best_g = 0;
    for (size_t g : it->second) {
      if (used[g] || gts[g].class_id != dets[d].class_id) continue;
      const double o = Overlap(c, dets[d].box, gts[g].box);
      if (o >= threshold && o > best) {
        best = o;
        best_g = g;
      }
    }
    if (best >= 0.0) {
      used[best_g] = 1;
      tp[d] = true;
    }
  }
  return tp;
}

std::optional<double> AveragePrecision(const EvalSet& set, int class_id,
                                       OverlapCriterion c, double threshold) {
  std::vector<EvalDetection> dets;
  std::vector<EvalGroundTruth> gts;
  for (const auto& d : set.detections) {
    if (d.class_id == class_id) dets.push_back(d);
  }
  for (const auto& g : set.ground_truth) {
    if (g.class_id == class_id) gts.push_back(g);
  }
  if (dets.empty() && gts.empty()) return std::nullopt;
  if (gts.empty() || dets.empty()) return 0.0;
  const auto tp = MatchDetections(dets, gts, c, threshold);
  const auto order = ScoreOrder(dets);
  std::vector<double> recall, precision;
  double hits = 0.0;
  for (size_t k = 0; k < order.size(); ++k) {
    if (tp[order[k]]) hits += 1.0;
    recall.push_back(hits / static_cast<double>(gts.size()));
    precision.push_back(hits / static_cast<double>(k + 1));
  }
  // Precision envelope from the right, then area over recall steps.
  for (size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

double ClassApRange(const EvalSet& set, int class_id, OverlapCriterion c) {
  double sum = 0.0;
  const auto thresholds = RangeThresholds();
  for (double t : thresholds) {
    sum += AveragePrecision(set, class_id, c, t).value_or(0.0);
  }
  return sum / static_cast<double>(thresholds.size());
}

double MapRange(const EvalSet& set, OverlapCriterion c) {
  const auto classes = set.GtClasses();
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  for (int k : classes) sum += ClassApRange(set, k, c);
  return sum / static_cast<double>(classes.size());
}

std::map<double, double> SensitivityAtFppi(const EvalSet& set,
                                           OverlapCriterion c, double threshold,
                                           std::span<const double> points) {
  if (set.num_images <= 0) {
    throw std::invalid_argument("sensitivity_at_fppi: zero images");
  }
  const auto& dets = set.detections;
  const auto& gts = set.ground_truth;
  std::unordered_map<int64_t, std::vector<size_t>> by_image;
  for (size_t g = 0; g < gts.size(); ++g) by_image[gts[g].image].push_back(g);

  // For each det: is it a false positive, and which GTs does it find.
  std::vector<char> is_fp(dets.size(), 1);
  std::vector<std::vector<size_t>> finds(dets.size());
  for (size_t d = 0; d < dets.size(); ++d) {
    const auto it = by_image.find(dets[d].image);
    if (it == by_image.end()) continue;
    for (size_t g : it->second) {
      if (gts[g].class_id != dets[d].class_id) continue;
      if (Overlap(c, dets[d].box, gts[g].box) >= threshold) {
        is_fp[d] = 0;
        finds[d].push_back(g);
      }
    }
  }
  const auto order = ScoreOrder(dets);
  std::vector<char> found(gts.size(), 0);
  int64_t fp = 0, hit = 0;
  // (fppi, sensitivity) after each distinct-score cutoff, starting with the
  // empty cutoff.
  std::vector<std::pair<double, double>> curve = {{0.0, 0.0}};
  const double n_img = static_cast<double>(set.num_images);
  const double n_gt = static_cast<double>(gts.size());
  for (size_t k = 0; k < order.size(); ++k) {
    const size_t d = order[k];
    fp += is_fp[d];
    for (size_t g : finds[d]) {
      if (!found[g]) {
        found[g] = 1;
        ++hit;
      }
    }
    const bool boundary =
        k + 1 == order.size() || dets[order[k + 1]].score != dets[d].score;
    if (boundary) {
      curve.emplace_back(fp / n_img, n_gt > 0 ? hit / n_gt : 0.0);
    }
  }
  std::map<double, double> out;
  for (double p : points) {
    double best = 0.0;
    for (const auto& [f, s] : curve) {
      if (f <= p) best = std::max(best, s);
    }
    out[p] = best;
  }
  return out;
}

double RecallRange(const EvalSet& set, OverlapCriterion c) {
  if (set.ground_truth.empty()) return 0.0;
  std::vector<EvalDetection> dets;
  for (const auto& d : set.detections) {
    if (d.score > 0.0) dets.push_back(d);
  }
  const auto thresholds = RangeThresholds();
  double sum = 0.0;
  for (double t : thresholds) {
    const auto tp = MatchDetections(dets, set.ground_truth, c, t);
    sum += static_cast<double>(std::count(tp.begin(), tp.end(), true)) /
           static_cast<double>(set.ground_truth.size());
  }
  return sum / static_cast<double>(thresholds.size());
}

MetricsReport PerClassReport(const EvalSet& set, OverlapCriterion c,
                             std::span<const double> fppi_points,
                             double match_threshold) {
  MetricsReport r;
  r.criterion = c;
  for (int k : set.GtClasses()) r.per_class_ap[k] = ClassApRange(set, k, c);
  r.map_range = MapRange(set, c);
  if (set.num_images > 0) {
    r.sensitivity = SensitivityAtFppi(set, c, match_threshold, fppi_points);
  } else {
    for (double p : fppi_points) r.sensitivity[p] = 0.0;
  }
  r.recall_range = RecallRange(set, c);
  return r;
}

std::string FormatReportTable(std::span<const MetricsReport> reports,
                              std::span<const std::string> class_names) {
  std::ostringstream os;
  for (const MetricsReport& r : reports) {
    os << "criterion: " << CriterionName(r.criterion) << "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "  %-24s %10s\n", "metric", "value");
    os << line;
    for (const auto& [k, ap] : r.per_class_ap) {
      std::snprintf(line, sizeof(line), "  %-24s %10.3f\n",
                    ("AP@[.5:.95] " + ClassLabel(k, class_names)).c_str(), ap);
      os << line;
    }
    std::snprintf(line, sizeof(line), "  %-24s %10.3f\n", "mAP@[.5:.95]",
                  r.map_range);
    os << line;
    for (const auto& [p, s] : r.sensitivity) {
      std::snprintf(line, sizeof(line), "  %-24s %10.3f\n",
                    ("sensitivity@" + FormatDouble(p, "%g") + "FPPI").c_str(),
                    s);
      os << line;
    }
    std::snprintf(line, sizeof(line), "  %-24s %10.3f\n", "recall@[.5:.95]",
                  r.recall_range);
    os << line;
  }
  return os.str();
}

std::string FormatReportRecords(std::span<const MetricsReport> reports,
                                std::span<const std::string> class_names) {
  std::ostringstream os;
  for (const MetricsReport& r : reports) {
    const std::string crit(CriterionName(r.criterion));
    for (const auto& [k, ap] : r.per_class_ap) {
      os << "ap_range " << ClassLabel(k, class_names) << " " << crit << " "
         << FormatDouble(ap) << "\n";
    }
    os << "map_range all " << crit << " " << FormatDouble(r.map_range) << "\n";
    for (const auto& [p, s] : r.sensitivity) {
      os << "sensitivity@" << FormatDouble(p, "%g") << " all " << crit << " "
         << FormatDouble(s) << "\n";
    }
    os << "recall_range all " << crit << " " << FormatDouble(r.recall_range)
       << "\n";
  }
  return os.str();
}

void WritePredictions(const std::filesystem::path& path,
                      std::span<const ImageDetections> predictions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[256];
  for (const ImageDetections& img : predictions) {
    for (const Detection& d : img.detections) {
      std::snprintf(buf, sizeof(buf), " %.4f %.4f %.4f %.4f %d %.6f\n",
                    d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.class_id,
                    d.score);
      out << img.image_id << buf;
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ImageDetections> ReadPredictions(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<ImageDetections> out;
  std::unordered_map<std::string, size_t> index;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string id;
    Detection d;
    if (!(is >> id >> d.box.x1 >> d.box.y1 >> d.box.x2 >> d.box.y2 >>
          d.class_id >> d.score)) {
      throw std::invalid_argument(
          path.string() + ":" + std::to_string(line_no) +
          ": expected 'image_id x1 y1 x2 y2 class score'");
    }
    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) out.push_back({id, {}});
    out[it->second].detections.push_back(d);
  }
  return out;
}

EvalSet BuildEvalSet(std::span<const DetectionSample> samples,
                     std::span<const ImageDetections> predictions) {
  EvalSet set;
  set.num_images = static_cast<int64_t>(samples.size());
  std::unordered_map<std::string, int64_t> index;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (!index.emplace(samples[i].id, static_cast<int64_t>(i)).second) {
      throw std::invalid_argument("duplicate image id '" + samples[i].id + "'");
    }
    for (size_t g = 0; g < samples[i].gt_boxes.size(); ++g) {
      set.ground_truth.push_back({static_cast<int64_t>(i),
                                  samples[i].gt_boxes[g],
                                  samples[i].gt_labels[g]});
    }
  }
  for (const ImageDetections& p : predictions) {
    const auto it = index.find(p.image_id);
    if (it == index.end()) {
      throw std::invalid_argument("prediction for unknown image '" +
                                  p.image_id + "'");
    }
    for (const Detection& d : p.detections) {
      set.detections.push_back({it->second, d.box, d.class_id, d.score});
    }
  }
  return set;
}

}  // namespace fsd
