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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "streamdet/core.hpp"
#include "streamdet/targets.hpp"

namespace streamdet {

/// Everything the pipeline needs for one image.
struct ImageRecord {
  FeatureMap features;
  ImageAnnotation annotation;
  ProposalSet proposals;
};

struct Dataset {
  std::vector<ClassId> classes;  // ascending
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> test;
};

/// Parameters of the synthetic scene generator. Cells under a ground-truth
/// box carry that class's signature (a seeded random unit direction scaled
/// by `signal_strength`) plus Gaussian noise; other cells carry noise only.
struct SyntheticSpec {
  int num_classes = 10;
  int images_per_class = 200;
  int grid_h = 5;
  int grid_w = 5;
  int channels = 64;
  int cell_px = 16;
  double signal_strength = 1.0;
  double noise_std = 0.3;
  int min_boxes = 1;
  int max_boxes = 3;
  int max_box_cells = 3;
  int proposals_per_image = 2000;
  int jitter_per_box = 8;
  double jitter = 0.25;
  double test_fraction = 0.2;
  int max_retries = 100;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys are rejected; missing keys keep defaults.
  static SyntheticSpec from_json(const nlohmann::json& j,
                                 const std::string& context);
};

/// The signature direction (unit length, before scaling) of class `c`.
std::vector<float> class_signature(const SyntheticSpec& spec, ClassId c);

/// Deterministic given the spec. Each class contributes images_per_class
/// images whose first box is of that class; per class, the trailing
/// test_fraction of images form the test split.
Dataset generate_dataset(const SyntheticSpec& spec);

/// Layout: features/<id>.rfm, annotations/<id>.json, proposals/<id>.json,
/// split.json {"classes", "train", "test"}.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Throws kIo listing every missing file.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace streamdet
