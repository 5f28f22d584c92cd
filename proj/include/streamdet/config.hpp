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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "streamdet/core.hpp"
#include "streamdet/eval.hpp"
#include "streamdet/head.hpp"
#include "streamdet/replay_buffer.hpp"
#include "streamdet/synthetic.hpp"

namespace streamdet {

enum class Learner { kRodeo, kFineTune, kSldaRegress };

const char* to_string(Learner l);
Learner parse_learner(const std::string& name);

struct PqSettings {
  int num_codebooks = 8;
  int codebook_size = 256;
  int iters = 25;
  /// Locations drawn per base image for training; 0 uses every location.
  int sample_locations = 0;
};

struct HeadSettings {
  int hidden = 256;
  PoolBins bins;
};

struct SgdSettings {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct TargetSettings {
  int batch_boxes = 64;
  double positive_fraction = 0.25;
  double iou_foreground = 0.5;
};

struct EvalSettings {
  double nms_iou = 0.3;
  int max_detections = 128;
  double min_score = 1e-3;
  ApInterpolation interpolation = ApInterpolation::kAllPoint;
};

struct SldaSettings {
  double slda_shrinkage = 1e-2;
  double regress_shrinkage = 1e-4;
};

struct Seeds {
  std::uint64_t shuffle = 1;
  std::uint64_t pq = 2;
  std::uint64_t buffer = 3;
  std::uint64_t head_init = 4;
  std::uint64_t data = 5;

  /// Every seed derived from one value.
  static Seeds from_master(std::uint64_t master);
};

/// How checkpoint mAPs are normalized into the incremental metric.
struct OfflineSettings {
  enum class Mode {
    kNone,           // report mAPs only
    kConstant,       // divide by `constant`
    kCurve,          // per-checkpoint values read from `curve` (a curves CSV)
    kRetrain,        // retrain an offline head per checkpoint
  };
  Mode mode = Mode::kNone;
  double constant = 0;
  std::filesystem::path curve;
};

struct ExperimentConfig {
  Learner learner = Learner::kRodeo;
  /// Exactly one of `dataset_dir` and `synthetic` is set. An inline
  /// synthetic spec takes its seed from seeds.data.
  std::optional<std::filesystem::path> dataset_dir;
  std::optional<SyntheticSpec> synthetic;
  /// Empty lists mean the dataset's classes split in half.
  std::vector<ClassId> base_classes;
  std::vector<ClassId> incremental_classes;
  int eval_every = 1;
  int replay_n = 4;
  ReplacementPolicy policy = ReplacementPolicy::kMin;
  BufferCapacity capacity = BufferCapacity::entries(1000);
  PqSettings pq;
  HeadSettings head;
  SgdSettings sgd;
  TargetSettings targets;
  EvalSettings eval;
  SldaSettings slda;
  int base_epochs = 10;
  int offline_batch_images = 2;
  Seeds seeds;
  OfflineSettings offline;

  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys at any level are rejected; omitted keys keep the
  /// defaults above.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::string& context = "config");

  /// The schedule for a dataset with `classes`.
  ClassSchedule schedule(const std::vector<ClassId>& classes) const;
};

ExperimentConfig read_config(const std::filesystem::path& path);

}  // namespace streamdet
