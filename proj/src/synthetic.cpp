// Copyright 2026 The streamdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "streamdet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "streamdet/error.hpp"
#include "streamdet/io.hpp"
#include "streamdet/rng.hpp"

namespace streamdet {

namespace {

constexpr std::uint64_t kSignatureStream = 0x5157;
constexpr std::uint64_t kSceneStream = 0x5C3E;

std::string image_name(ClassId c, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%02d_%04d", c, i);
  return buf;
}

BoundingBox random_grid_box(const SyntheticSpec& spec, Rng& rng) {
  const int max_h = std::min(spec.max_box_cells, spec.grid_h);
  const int max_w = std::min(spec.max_box_cells, spec.grid_w);
  const int h = 1 + static_cast<int>(rng.uniform_index(max_h));
  const int w = 1 + static_cast<int>(rng.uniform_index(max_w));
  const int r = static_cast<int>(rng.uniform_index(spec.grid_h - h + 1));
  const int c = static_cast<int>(rng.uniform_index(spec.grid_w - w + 1));
  const double px = spec.cell_px;
  return {c * px, r * px, (c + w) * px, (r + h) * px};
}

bool overlaps(const BoundingBox& a, const BoundingBox& b) {
  return std::min(a.x2, b.x2) > std::max(a.x1, b.x1) &&
         std::min(a.y2, b.y2) > std::max(a.y1, b.y1);
}

/// A box lying mostly within a ground-truth box without matching it pools
/// to the same features as that box.
bool inside_object(const BoundingBox& b, const ImageAnnotation& ann) {
  for (const auto& lb : ann.boxes) {
    const double iw = std::min(b.x2, lb.box.x2) - std::max(b.x1, lb.box.x1);
    const double ih = std::min(b.y2, lb.box.y2) - std::max(b.y1, lb.box.y1);
    if (iw <= 0 || ih <= 0) continue;
    if (iw * ih >= 0.5 * b.area() && iou(b, lb.box) <= 0.5) return true;
  }
  return false;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::kConfig, std::string("synthetic spec: ") + what);
  };
  require(num_classes >= 2, "num_classes must be >= 2");
  require(images_per_class >= 1, "images_per_class must be >= 1");
  require(grid_h >= 1 && grid_w >= 1, "grid must be positive");
  require(channels >= 1, "channels must be positive");
  require(cell_px >= 1, "cell_px must be positive");
  require(noise_std >= 0 && std::isfinite(noise_std), "noise_std must be >= 0");
  require(std::isfinite(signal_strength), "signal_strength must be finite");
  require(min_boxes >= 1 && max_boxes >= min_boxes, "bad boxes range");
  require(max_box_cells >= 1, "max_box_cells must be >= 1");
  require(jitter_per_box >= 0, "jitter_per_box must be >= 0");
  require(proposals_per_image >= 1, "proposals_per_image must be >= 1");
  require(jitter >= 0 && jitter < 0.5, "jitter must lie in [0, 0.5)");
  require(test_fraction >= 0 && test_fraction < 1,
          "test_fraction must lie in [0, 1)");
  require(max_retries >= 1, "max_retries must be >= 1");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"num_classes", num_classes},
          {"images_per_class", images_per_class},
          {"grid_h", grid_h},
          {"grid_w", grid_w},
          {"channels", channels},
          {"cell_px", cell_px},
          {"signal_strength", signal_strength},
          {"noise_std", noise_std},
          {"min_boxes", min_boxes},
          {"max_boxes", max_boxes},
          {"max_box_cells", max_box_cells},
          {"proposals_per_image", proposals_per_image},
          {"jitter_per_box", jitter_per_box},
          {"jitter", jitter},
          {"test_fraction", test_fraction},
          {"max_retries", max_retries},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j,
                                       const std::string& context) {
  require_keys(j,
               {"num_classes", "images_per_class", "grid_h", "grid_w",
                "channels", "cell_px", "signal_strength", "noise_std",
                "min_boxes", "max_boxes", "max_box_cells",
                "proposals_per_image", "jitter_per_box", "jitter",
                "test_fraction", "max_retries", "seed"},
               context);
  SyntheticSpec s;
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      field = json_field<std::remove_reference_t<decltype(field)>>(j, key,
                                                                   context);
    }
  };
  opt("num_classes", s.num_classes);
  opt("images_per_class", s.images_per_class);
  opt("grid_h", s.grid_h);
  opt("grid_w", s.grid_w);
  opt("channels", s.channels);
  opt("cell_px", s.cell_px);
  opt("signal_strength", s.signal_strength);
  opt("noise_std", s.noise_std);
  opt("min_boxes", s.min_boxes);
  opt("max_boxes", s.max_boxes);
  opt("max_box_cells", s.max_box_cells);
  opt("proposals_per_image", s.proposals_per_image);
  opt("jitter_per_box", s.jitter_per_box);
  opt("jitter", s.jitter);
  opt("test_fraction", s.test_fraction);
  opt("max_retries", s.max_retries);
  opt("seed", s.seed);
  s.validate();
  return s;
}

std::vector<float> class_signature(const SyntheticSpec& spec, ClassId c) {
  Rng rng(mix_seed(mix_seed(spec.seed, kSignatureStream),
                   static_cast<std::uint64_t>(c)));
  std::vector<double> v(spec.channels);
  double norm = 0;
  do {
    norm = 0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0);
  norm = std::sqrt(norm);
  std::vector<float> out(spec.channels);
  for (int i = 0; i < spec.channels; ++i) {
    out[i] = static_cast<float>(v[i] / norm);
  }
  return out;
}

Dataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  Dataset data;
  std::vector<std::vector<float>> signatures(spec.num_classes + 1);
  for (ClassId c = 1; c <= spec.num_classes; ++c) {
    data.classes.push_back(c);
    signatures[c] = class_signature(spec, c);
  }
  const int image_h = spec.grid_h * spec.cell_px;
  const int image_w = spec.grid_w * spec.cell_px;
  const int n_test = static_cast<int>(
      std::floor(spec.images_per_class * spec.test_fraction + 1e-9));

  for (ClassId cls = 1; cls <= spec.num_classes; ++cls) {
    for (int i = 0; i < spec.images_per_class; ++i) {
      const std::string id = image_name(cls, i);
      Rng rng(mix_seed(mix_seed(spec.seed, kSceneStream),
                       static_cast<std::uint64_t>(cls) * 1000003ull + i));
      const int n_boxes =
          spec.min_boxes + static_cast<int>(rng.uniform_index(
                               spec.max_boxes - spec.min_boxes + 1));
      ImageAnnotation ann{id, image_h, image_w, {}};
      for (int b = 0; b < n_boxes; ++b) {
        const ClassId c =
            b == 0 ? cls
                   : 1 + static_cast<ClassId>(rng.uniform_index(spec.num_classes));
        bool placed = false;
        for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
          const BoundingBox box = random_grid_box(spec, rng);
          placed = std::none_of(
              ann.boxes.begin(), ann.boxes.end(),
              [&](const LabeledBox& o) { return overlaps(o.box, box); });
          if (placed) ann.boxes.push_back({box, c});
        }
        if (!placed) {
          if (b == 0) {
            fail(ErrorKind::kConfig,
                 "could not place a box in '" + id + "' within the retry cap");
          }
          break;  // the grid is full; keep what fits
        }
      }

      FeatureMap fmap(id, spec.grid_h, spec.grid_w, spec.channels);
      for (auto& v : fmap.values) {
        v = static_cast<float>(spec.noise_std * rng.normal());
      }
      for (const auto& lb : ann.boxes) {
        const int r0 = static_cast<int>(lb.box.y1 / spec.cell_px);
        const int r1 = static_cast<int>(lb.box.y2 / spec.cell_px);
        const int c0 = static_cast<int>(lb.box.x1 / spec.cell_px);
        const int c1 = static_cast<int>(lb.box.x2 / spec.cell_px);
        const auto& sig = signatures[lb.class_id];
        for (int r = r0; r < r1; ++r) {
          for (int c = c0; c < c1; ++c) {
            auto cell = fmap.cell(r, c);
            for (int k = 0; k < spec.channels; ++k) {
              cell[k] += static_cast<float>(spec.signal_strength * sig[k]);
            }
          }
        }
      }

      ProposalSet props{id, {}};
      for (const auto& lb : ann.boxes) {
        for (int k = 0; k < spec.jitter_per_box &&
                        static_cast<int>(props.boxes.size()) <
                            spec.proposals_per_image;
             ++k) {
          const double w = lb.box.width(), h = lb.box.height();
          BoundingBox j{lb.box.x1 + rng.uniform(-spec.jitter, spec.jitter) * w,
                        lb.box.y1 + rng.uniform(-spec.jitter, spec.jitter) * h,
                        lb.box.x2 + rng.uniform(-spec.jitter, spec.jitter) * w,
                        lb.box.y2 + rng.uniform(-spec.jitter, spec.jitter) * h};
          props.boxes.push_back(clip_box(j, image_w, image_h));
        }
      }
      while (static_cast<int>(props.boxes.size()) < spec.proposals_per_image) {
        BoundingBox neg;
        for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
          const double w = rng.uniform(0.5, spec.max_box_cells) * spec.cell_px;
          const double h = rng.uniform(0.5, spec.max_box_cells) * spec.cell_px;
          const double x = rng.uniform(0, std::max(0.0, image_w - w));
          const double y = rng.uniform(0, std::max(0.0, image_h - h));
          neg = clip_box({x, y, x + w, y + h}, image_w, image_h);
          if (!inside_object(neg, ann)) break;
        }
        props.boxes.push_back(neg);
      }

      ImageRecord rec{std::move(fmap), std::move(ann), std::move(props)};
      (i >= spec.images_per_class - n_test ? data.test : data.train)
          .push_back(std::move(rec));
    }
  }
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  nlohmann::json train = nlohmann::json::array(), test = nlohmann::json::array();
  for (const auto* split : {&data.train, &data.test}) {
    for (const auto& rec : *split) {
      write_feature(dir / "features" / (rec.annotation.image_id + ".rfm"),
                    rec.features);
      write_annotation(
          dir / "annotations" / (rec.annotation.image_id + ".json"),
          rec.annotation);
      write_proposals(dir / "proposals" / (rec.annotation.image_id + ".json"),
                      rec.proposals);
      (split == &data.train ? train : test).push_back(rec.annotation.image_id);
    }
  }
  write_json(dir / "split.json",
             {{"classes", data.classes}, {"train", train}, {"test", test}});
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto split_path = dir / "split.json";
  const nlohmann::json split = read_json(split_path);
  require_keys(split, {"classes", "train", "test"}, split_path.string());
  Dataset data;
  data.classes = json_field<std::vector<ClassId>>(split, "classes",
                                                  split_path.string());
  std::sort(data.classes.begin(), data.classes.end());
  std::vector<std::string> missing;
  auto load = [&](const char* key, std::vector<ImageRecord>& out) {
    for (const auto& id :
         json_field<std::vector<std::string>>(split, key, split_path.string())) {
      const auto f = dir / "features" / (id + ".rfm");
      const auto a = dir / "annotations" / (id + ".json");
      const auto p = dir / "proposals" / (id + ".json");
      bool ok = true;
      for (const auto& path : {f, a, p}) {
        if (!std::filesystem::exists(path)) {
          missing.push_back(path.string());
          ok = false;
        }
      }
      if (!ok) continue;
      ImageRecord rec{read_feature(f), read_annotation(a), read_proposals(p)};
      if (rec.features.image_id != id || rec.annotation.image_id != id ||
          rec.proposals.image_id != id) {
        fail(ErrorKind::kParse, "files for '" + id + "' disagree on image_id");
      }
      out.push_back(std::move(rec));
    }
  };
  load("train", data.train);
  load("test", data.test);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    fail(ErrorKind::kIo, std::to_string(missing.size()) +
                             " dataset files are missing:" + list);
  }
  return data;
}

}  // namespace streamdet
