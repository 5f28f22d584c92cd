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

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "streamdet/core.hpp"

namespace streamdet {

/// Class-agnostic region proposals for one image.
struct ProposalSet {
  ImageId image_id;
  std::vector<BoundingBox> boxes;

  bool operator==(const ProposalSet&) const = default;
};

/// (tx, ty, tw, th): center offsets scaled by proposal size, log size ratios.
using BoxDeltas = std::array<double, 4>;

/// Largest |tw| or |th| accepted when decoding.
inline const double kMaxLogScale = std::log(1e6);

struct RoiTarget {
  BoundingBox box;
  ClassId class_id = kBackground;
  BoxDeltas deltas{0, 0, 0, 0};  // zero for background
  /// Highest-IoU visible ground-truth box, if any overlaps at all.
  std::optional<std::size_t> matched_gt;
  double max_iou = 0;

  bool foreground() const { return class_id != kBackground; }
};

/// Matches every proposal to its highest-IoU visible ground-truth box
/// (ties to the lower index). IoU strictly above `iou_fg` is foreground.
std::vector<RoiTarget> label_proposals(const ProposalSet& proposals,
                                       const ImageAnnotation& gt,
                                       const std::set<ClassId>& visible,
                                       double iou_fg = 0.5);

struct MiniBatch {
  std::vector<RoiTarget> rois;  // positives first, then backgrounds
  std::size_t positives = 0;
  bool short_batch = false;     // fewer than `batch` targets were available
};

/// Takes ceil(pos_frac * batch) positives when available, fills the rest
/// with backgrounds.
MiniBatch sample_minibatch(std::span<const RoiTarget> targets,
                           std::uint64_t seed, int batch = 64,
                           double pos_frac = 0.25);

BoxDeltas encode_deltas(const BoundingBox& proposal, const BoundingBox& gt);
BoundingBox decode_deltas(const BoundingBox& proposal, const BoxDeltas& deltas);

}  // namespace streamdet
