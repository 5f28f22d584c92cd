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

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "streamdet/core.hpp"

namespace streamdet {

/// Greedy per-image, per-class suppression: keep the best remaining box,
/// drop same-class boxes with IoU above `iou_thresh`, repeat. Each image then
/// keeps its `max_out` best survivors. Equal scores order by box coordinates.
std::vector<Detection> nms(std::span<const Detection> dets,
                           double iou_thresh = 0.3, std::size_t max_out = 128);

enum class ApInterpolation { kAllPoint, kElevenPoint };

struct GroundTruthBox {
  ImageId image_id;
  BoundingBox box;
};

/// AP for one class at IoU >= `match_iou`. Each detection, best score first,
/// claims the highest-IoU unclaimed ground truth in its image. Returns
/// nullopt when there is no ground truth.
std::optional<double> average_precision(
    std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
    ApInterpolation mode = ApInterpolation::kAllPoint, double match_iou = 0.5);

struct EvalReport {
  int t = 0;
  std::map<ClassId, double> per_class_ap;
  double map = 0;
  std::set<ClassId> classes_evaluated;
  /// Requested classes skipped because the test set holds none of them.
  std::vector<ClassId> classes_without_gt;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  ApInterpolation interpolation = ApInterpolation::kAllPoint;
  double match_iou = 0.5;
};

/// mAP over `classes`. Annotations must hold only boxes of those classes
/// (kPrecondition otherwise); detections of other classes are ignored.
EvalReport evaluate(std::span<const Detection> dets,
                    std::span<const ImageAnnotation> annotations,
                    const std::set<ClassId>& classes, int t = 0,
                    const EvalOptions& options = {});

/// Mean over checkpoints of alpha_t / offline_t. Throws kDomain on unequal
/// lengths, empty input or non-positive offline values.
double omega_map(std::span<const double> alphas,
                 std::span<const double> offline);
double omega_map(std::span<const double> alphas, double offline_constant);

/// "t,map,ap_<c>..." with one column per class in `classes`; unseen classes
/// are left blank.
std::string curves_csv(std::span<const EvalReport> reports,
                       std::span<const ClassId> classes);
/// The "map" column of a curves file, in row order.
std::vector<double> read_curve_maps(const std::filesystem::path& path);
std::vector<double> parse_curve_maps(const std::string& text,
                                     const std::string& context);

}  // namespace streamdet
