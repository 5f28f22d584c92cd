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

#include "streamdet/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "streamdet/error.hpp"

namespace streamdet {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kEmptyBox: return "empty_box";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kPolicy: return "policy";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kModelEmpty: return "model_empty";
    case ErrorKind::kSchedule: return "schedule";
    case ErrorKind::kNumeric: return "numeric";
  }
  return "unknown";
}

FeatureMap::FeatureMap(ImageId id, int h, int w, int d)
    : image_id(std::move(id)), grid_h(h), grid_w(w), channels(d) {
  if (h < 1 || w < 1 || d < 1) {
    fail(ErrorKind::kDomain, "feature map dimensions must be positive");
  }
  values.assign(static_cast<std::size_t>(h) * w * d, 0.0f);
}

std::span<const float> FeatureMap::cell(int row, int col) const {
  const std::size_t off =
      (static_cast<std::size_t>(row) * grid_w + col) * channels;
  return {values.data() + off, static_cast<std::size_t>(channels)};
}

std::span<float> FeatureMap::cell(int row, int col) {
  const std::size_t off =
      (static_cast<std::size_t>(row) * grid_w + col) * channels;
  return {values.data() + off, static_cast<std::size_t>(channels)};
}

std::span<const float> FeatureMap::cell(std::size_t flat) const {
  return {values.data() + flat * channels, static_cast<std::size_t>(channels)};
}

void FeatureMap::validate() const {
  if (grid_h < 1 || grid_w < 1 || channels < 1) {
    fail(ErrorKind::kDomain, "feature map '" + image_id +
                                 "' has non-positive dimensions");
  }
  const std::size_t expected = cell_count() * channels;
  if (values.size() != expected) {
    fail(ErrorKind::kDomain, "feature map '" + image_id + "' holds " +
                                 std::to_string(values.size()) +
                                 " values, expected " +
                                 std::to_string(expected));
  }
  for (float v : values) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::kDomain,
           "feature map '" + image_id + "' contains a non-finite value");
    }
  }
}

bool BoundingBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x1 < x2 && y1 < y2;
}

std::set<ClassId> ImageAnnotation::classes() const {
  std::set<ClassId> out;
  for (const auto& b : boxes) out.insert(b.class_id);
  return out;
}

bool ImageAnnotation::has_class(ClassId c) const {
  return std::any_of(boxes.begin(), boxes.end(),
                     [c](const LabeledBox& b) { return b.class_id == c; });
}

ImageAnnotation ImageAnnotation::restricted_to(
    const std::set<ClassId>& visible) const {
  ImageAnnotation out{image_id, image_h, image_w, {}};
  for (const auto& b : boxes) {
    if (visible.contains(b.class_id)) out.boxes.push_back(b);
  }
  return out;
}

std::size_t ImageAnnotation::append_unique(std::span<const LabeledBox> extra) {
  std::size_t added = 0;
  for (const auto& b : extra) {
    if (std::find(boxes.begin(), boxes.end(), b) == boxes.end()) {
      boxes.push_back(b);
      ++added;
    }
  }
  return added;
}

void ImageAnnotation::validate() const {
  if (image_h < 1 || image_w < 1) {
    fail(ErrorKind::kDomain,
         "annotation '" + image_id + "' has non-positive image size");
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    if (!b.box.valid()) {
      fail(ErrorKind::kDomain, "annotation '" + image_id + "' box " +
                                   std::to_string(i) + " has no area");
    }
    if (b.box.x1 < 0 || b.box.y1 < 0 || b.box.x2 > image_w ||
        b.box.y2 > image_h) {
      fail(ErrorKind::kDomain, "annotation '" + image_id + "' box " +
                                   std::to_string(i) +
                                   " lies outside the image");
    }
    if (b.class_id < 1) {
      fail(ErrorKind::kDomain, "annotation '" + image_id + "' box " +
                                   std::to_string(i) +
                                   " has a non-foreground class id");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (boxes[j] == b) {
        fail(ErrorKind::kDomain, "annotation '" + image_id +
                                     "' repeats box " + std::to_string(i));
      }
    }
  }
}

ClassSchedule ClassSchedule::half_split(std::vector<ClassId> all_classes,
                                        int eval_every) {
  std::sort(all_classes.begin(), all_classes.end());
  ClassSchedule s;
  const std::size_t half = all_classes.size() / 2;
  s.base_classes.assign(all_classes.begin(), all_classes.begin() + half);
  s.incremental_classes.assign(all_classes.begin() + half, all_classes.end());
  s.eval_every = eval_every;
  s.validate();
  return s;
}

std::vector<ClassId> ClassSchedule::all_classes() const {
  std::vector<ClassId> out = base_classes;
  out.insert(out.end(), incremental_classes.begin(), incremental_classes.end());
  return out;
}

void ClassSchedule::validate() const {
  if (eval_every < 1) fail(ErrorKind::kConfig, "eval_every must be >= 1");
  if (base_classes.empty()) {
    fail(ErrorKind::kConfig, "schedule needs at least one base class");
  }
  for (const auto* list : {&base_classes, &incremental_classes}) {
    if (!std::is_sorted(list->begin(), list->end())) {
      fail(ErrorKind::kConfig, "schedule class lists must be ascending");
    }
  }
  std::set<ClassId> seen;
  for (ClassId c : all_classes()) {
    if (c < 1) fail(ErrorKind::kConfig, "class ids must be >= 1");
    if (!seen.insert(c).second) {
      fail(ErrorKind::kConfig,
           "class " + std::to_string(c) + " appears twice in the schedule");
    }
  }
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid() || !b.valid()) {
    fail(ErrorKind::kDomain, "iou of a box without positive area");
  }
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

BoundingBox clip_box(const BoundingBox& b, double w, double h) {
  if (!(w > 0) || !(h > 0)) {
    fail(ErrorKind::kDomain, "clip extent must be positive");
  }
  BoundingBox out{std::clamp(b.x1, 0.0, w), std::clamp(b.y1, 0.0, h),
                  std::clamp(b.x2, 0.0, w), std::clamp(b.y2, 0.0, h)};
  if (!out.valid()) fail(ErrorKind::kEmptyBox, "box is empty after clipping");
  return out;
}

}  // namespace streamdet
