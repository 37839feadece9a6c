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

#include "fsd/synthdata.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "fsd/pgm.h"
#include "fsd/rng.h"

namespace fsd {
namespace {

constexpr double kBackground = 0.4;
constexpr double kLesionOffset = 0.35;
constexpr double kTextureAmplitude = 0.08;

struct Lesion {
  double cx, cy, ax, ay;
  int class_id;
};

// Radial profile in normalized ellipse radius r; zero for r >= 1.
double Profile(LesionStyle style, double r) {
  if (r >= 1.0) return 0.0;
  if (style == LesionStyle::kBlob) {
    return r <= 0.75 ? 1.0 : (1.0 - r) / 0.25;
  }
  return std::max(0.0, 1.0 - std::abs(r - 0.8) / 0.2);
}

// Minor/major axis ratio band of a class: class 1 is circular.
double AxisRatio(int class_id, SplitMix64& rng) {
  if (class_id <= 1) return 1.0;
  const double centre = 1.0 - 0.15 * (class_id - 1);
  return std::max(0.3, rng.Uniform(centre - 0.05, centre + 0.05));
}

Box LesionBox(const Lesion& l, int size) {
  const double s = static_cast<double>(size);
  return {std::max(0.0, std::floor(l.cx - l.ax)),
          std::max(0.0, std::floor(l.cy - l.ay)),
          std::min(s, std::ceil(l.cx + l.ax)),
          std::min(s, std::ceil(l.cy + l.ay))};
}

std::string ReadText(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const char* SplitName(Split s) { return s == Split::kTrain ? "train" : "val"; }

}  // namespace

std::string_view StyleName(LesionStyle s) {
  return s == LesionStyle::kBlob ? "blob" : "ring";
}

std::optional<LesionStyle> ParseStyle(std::string_view name) {
  if (name == "blob") return LesionStyle::kBlob;
  if (name == "ring") return LesionStyle::kRing;
  return std::nullopt;
}

void SyntheticConfig::Validate() const {
  auto fail = [](const std::string& m) {
    throw std::invalid_argument("synthetic config: " + m);
  };
  if (image_size < 16) fail("image_size must be >= 16");
  if (num_train < 0 || num_val < 0) fail("image counts must be >= 0");
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (lesions_min < 1 || lesions_max < lesions_min) {
    fail("lesions per image must satisfy 1 <= min <= max");
  }
  if (!(radius_min > 0) || radius_max < radius_min) {
    fail("lesion radius must satisfy 0 < min <= max");
  }
  if (2 * radius_max + 2 >= image_size)
    fail("lesion radius too large for image");
  if (noise_sigma < 0) fail("noise_sigma must be >= 0");
}

std::vector<std::string> SyntheticConfig::ClassNames() const {
  if (num_classes == 1) return {"lesion"};
  std::vector<std::string> names;
  for (int k = 1; k <= num_classes; ++k)
    names.push_back("type" + std::to_string(k));
  return names;
}

DetectionSample GenerateImage(const SyntheticConfig& cfg, Split split,
                              int index) {
  cfg.Validate();
  SplitMix64 rng(DeriveSeed(cfg.seed, {static_cast<uint64_t>(split) + 1,
                                       static_cast<uint64_t>(index)}));
  const int n = cfg.image_size;
  const int count =
      static_cast<int>(rng.UniformInt(cfg.lesions_min, cfg.lesions_max));
  const int shared_class = static_cast<int>(rng.UniformInt(1, cfg.num_classes));

  std::vector<Lesion> lesions;
  std::vector<Box> boxes;
  for (int k = 0; k < count; ++k) {
    const int cls = cfg.cooccur
                        ? shared_class
                        : static_cast<int>(rng.UniformInt(1, cfg.num_classes));
    const double a = rng.Uniform(cfg.radius_min, cfg.radius_max);
    const double b = a * AxisRatio(cls, rng);
    const bool vertical = rng.Uniform() < 0.5;
    const double ax = vertical ? b : a;
    const double ay = vertical ? a : b;
    // Rejection-sample a centre whose box does not touch earlier boxes.
    for (int attempt = 0; attempt < 32; ++attempt) {
      Lesion l{rng.Uniform(ax + 1.0, n - ax - 1.0),
               rng.Uniform(ay + 1.0, n - ay - 1.0), ax, ay, cls};
      const Box box = LesionBox(l, n);
      const bool clear = std::none_of(
          boxes.begin(), boxes.end(),
          [&](const Box& other) { return IntersectionArea(box, other) > 0.0; });
      if (clear) {
        lesions.push_back(l);
        boxes.push_back(box);
        break;
      }
    }
  }

  std::vector<double> pixels(static_cast<size_t>(n) * n);
  for (double& p : pixels) p = kBackground + cfg.noise_sigma * rng.Normal();
  for (const Lesion& l : lesions) {
    const int x0 = static_cast<int>(std::floor(l.cx - l.ax));
    const int x1 = static_cast<int>(std::ceil(l.cx + l.ax));
    const int y0 = static_cast<int>(std::floor(l.cy - l.ay));
    const int y1 = static_cast<int>(std::ceil(l.cy + l.ay));
    for (int y = std::max(0, y0); y < std::min(n, y1); ++y) {
      for (int x = std::max(0, x0); x < std::min(n, x1); ++x) {
        const double dx = (x + 0.5 - l.cx) / l.ax;
        const double dy = (y + 0.5 - l.cy) / l.ay;
        const double r = std::sqrt(dx * dx + dy * dy);
        const double p = Profile(cfg.style, r);
        if (p <= 0.0) continue;
        const double texture =
            kTextureAmplitude *
            std::cos(2.0 * std::numbers::pi * l.class_id * r);
        pixels[static_cast<size_t>(y) * n + x] += p * (kLesionOffset + texture);
      }
    }
  }

  DetectionSample s;
  char name[64];
  std::snprintf(name, sizeof(name), "%s/img_%05d.pgm", SplitName(split), index);
  s.id = name;
  // Quantize through the storage format so memory and disk agree.
  s.image = DecodePgm(EncodePgm(Tensor({1, n, n}, std::move(pixels))));
  s.gt_boxes = boxes;
  for (const Lesion& l : lesions) s.gt_labels.push_back(l.class_id);
  return s;
}

std::vector<DetectionSample> GenerateSplit(const SyntheticConfig& cfg,
                                           Split split) {
  const int count = split == Split::kTrain ? cfg.num_train : cfg.num_val;
  std::vector<DetectionSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(GenerateImage(cfg, split, i));
  return out;
}

std::string FormatManifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << "fsd-manifest " << m.version << "\nclasses";
  for (const auto& c : m.class_names) os << " " << c;
  os << "\n";
  char buf[128];
  for (const ManifestRecord& r : m.records) {
    std::snprintf(buf, sizeof(buf), " %g %g %g %g %d\n", r.box.x1, r.box.y1,
                  r.box.x2, r.box.y2, r.class_id);
    os << r.image_path << buf;
  }
  return os.str();
}

DatasetManifest ParseManifest(std::string_view text) {
  DatasetManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool have_magic = false, have_classes = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    const auto where = "manifest line " + std::to_string(line_no) + ": ";
    if (!have_magic) {
      std::string magic;
      if (!(is >> magic >> m.version) || magic != "fsd-manifest" ||
          m.version != 1) {
        throw std::invalid_argument(where + "expected 'fsd-manifest 1'");
      }
      have_magic = true;
      continue;
    }
    if (!have_classes) {
      std::string tag, name;
      if (!(is >> tag) || tag != "classes") {
        throw std::invalid_argument(where + "expected 'classes <names...>'");
      }
      while (is >> name) m.class_names.push_back(name);
      if (m.class_names.empty()) {
        throw std::invalid_argument(where + "no class names");
      }
      have_classes = true;
      continue;
    }
    ManifestRecord r;
    if (!(is >> r.image_path >> r.box.x1 >> r.box.y1 >> r.box.x2 >> r.box.y2 >>
          r.class_id)) {
      throw std::invalid_argument(where + "expected 'path x1 y1 x2 y2 class'");
    }
    if (r.class_id < 1 || r.class_id > static_cast<int>(m.class_names.size())) {
      throw std::invalid_argument(where + "class id out of range");
    }
    m.records.push_back(r);
  }
  if (!have_classes) throw std::invalid_argument("manifest: missing header");
  return m;
}

void SaveManifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << FormatManifest(m);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DatasetManifest LoadManifest(const std::filesystem::path& path) {
  return ParseManifest(ReadText(path));
}

GeneratedDataset GenerateDataset(const SyntheticConfig& cfg,
                                 const std::filesystem::path& out_dir) {
  cfg.Validate();
  GeneratedDataset g;
  std::error_code ec;
  for (const Split split : {Split::kTrain, Split::kVal}) {
    const std::filesystem::path dir = out_dir / SplitName(split);
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      throw std::runtime_error("cannot create " + dir.string() + ": " +
                               ec.message());
    }
    DatasetManifest m;
    m.class_names = cfg.ClassNames();
    for (const DetectionSample& s : GenerateSplit(cfg, split)) {
      SavePgm(out_dir / s.id, s.image);
      for (size_t k = 0; k < s.gt_boxes.size(); ++k) {
        m.records.push_back({s.id, s.gt_boxes[k], s.gt_labels[k]});
      }
    }
    const auto path = out_dir / (std::string(SplitName(split)) + ".manifest");
    SaveManifest(path, m);
    if (split == Split::kTrain) {
      g.train_manifest = path;
      g.train = std::move(m);
    } else {
      g.val_manifest = path;
      g.val = std::move(m);
    }
  }
  return g;
}

std::vector<DetectionSample> LoadDataset(
    const std::filesystem::path& manifest) {
  const DatasetManifest m = LoadManifest(manifest);
  const auto base = manifest.parent_path();
  std::vector<DetectionSample> out;
  std::unordered_map<std::string, size_t> index;
  for (const ManifestRecord& r : m.records) {
    auto [it, inserted] = index.emplace(r.image_path, out.size());
    if (inserted) {
      DetectionSample s;
      s.id = r.image_path;
      s.image = LoadPgm(base / r.image_path);
      out.push_back(std::move(s));
    }
    DetectionSample& s = out[it->second];
    s.gt_boxes.push_back(r.box);
    s.gt_labels.push_back(r.class_id);
  }
  for (const DetectionSample& s : out) ValidateSample(s);
  return out;
}

}  // namespace fsd
