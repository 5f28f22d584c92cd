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

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace streamdet {

using ImageId = std::string;
using ClassId = int;

/// Class id permanently reserved for background.
inline constexpr ClassId kBackground = 0;

/// Backbone output for one image: a grid_h x grid_w grid of channel vectors,
/// stored row-major as (row, col, channel).
struct FeatureMap {
  ImageId image_id;
  int grid_h = 0;
  int grid_w = 0;
  int channels = 0;
  std::vector<float> values;

  FeatureMap() = default;
  FeatureMap(ImageId id, int h, int w, int d);

  std::size_t cell_count() const {
    return static_cast<std::size_t>(grid_h) * grid_w;
  }
  std::span<const float> cell(int row, int col) const;
  std::span<float> cell(int row, int col);
  std::span<const float> cell(std::size_t flat) const;

  /// Throws kDomain on bad shape or non-finite values.
  void validate() const;

  bool operator==(const FeatureMap&) const = default;
};

/// Axis-aligned box in continuous image coordinates; area has no +1 term.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return x1 + 0.5 * width(); }
  double center_y() const { return y1 + 0.5 * height(); }
  bool valid() const;

  bool operator==(const BoundingBox&) const = default;
  auto operator<=>(const BoundingBox&) const = default;
};

struct LabeledBox {
  BoundingBox box;
  ClassId class_id = kBackground;

  bool operator==(const LabeledBox&) const = default;
};

struct ImageAnnotation {
  ImageId image_id;
  int image_h = 0;
  int image_w = 0;
  std::vector<LabeledBox> boxes;

  /// Distinct class ids among the boxes, ascending.
  std::set<ClassId> classes() const;
  bool has_class(ClassId c) const;
  /// Copy keeping only boxes whose class is in `visible`.
  ImageAnnotation restricted_to(const std::set<ClassId>& visible) const;
  /// Appends boxes not already present; returns how many were added.
  std::size_t append_unique(std::span<const LabeledBox> extra);

  void validate() const;

  bool operator==(const ImageAnnotation&) const = default;
};

struct Detection {
  ImageId image_id;
  BoundingBox box;
  ClassId class_id = 1;
  double score = 0;
};

/// Base classes are learned offline; incremental ones arrive one at a time.
struct ClassSchedule {
  std::vector<ClassId> base_classes;
  std::vector<ClassId> incremental_classes;
  int eval_every = 1;

  /// First half (rounded down) of the sorted ids is the base set.
  static ClassSchedule half_split(std::vector<ClassId> all_classes,
                                  int eval_every);
  std::vector<ClassId> all_classes() const;
  void validate() const;
};

/// Intersection over union. Throws kDomain if either box has no area.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Clamps to [0, w] x [0, h]. Throws kEmptyBox if nothing remains.
BoundingBox clip_box(const BoundingBox& b, double w, double h);

}  // namespace streamdet
