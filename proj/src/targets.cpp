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

#include "streamdet/targets.hpp"

#include <algorithm>

#include "streamdet/error.hpp"
#include "streamdet/rng.hpp"

namespace streamdet {

std::vector<RoiTarget> label_proposals(const ProposalSet& proposals,
                                       const ImageAnnotation& gt,
                                       const std::set<ClassId>& visible,
                                       double iou_fg) {
  if (!proposals.boxes.empty() && proposals.image_id != gt.image_id) {
    fail(ErrorKind::kPrecondition, "proposals for '" + proposals.image_id +
                                       "' paired with annotation for '" +
                                       gt.image_id + "'");
  }
  std::vector<RoiTarget> out;
  out.reserve(proposals.boxes.size());
  for (const auto& p : proposals.boxes) {
    RoiTarget t;
    t.box = p;
    for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
      if (!visible.contains(gt.boxes[g].class_id)) continue;
      const double o = iou(p, gt.boxes[g].box);
      if (o > t.max_iou) {
        t.max_iou = o;
        t.matched_gt = g;
      }
    }
    if (t.matched_gt && t.max_iou > iou_fg) {
      const auto& g = gt.boxes[*t.matched_gt];
      t.class_id = g.class_id;
      t.deltas = encode_deltas(p, g.box);
    }
    out.push_back(t);
  }
  return out;
}

MiniBatch sample_minibatch(std::span<const RoiTarget> targets,
                           std::uint64_t seed, int batch, double pos_frac) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    (targets[i].foreground() ? pos : neg).push_back(i);
  }
  const auto want_pos =
      static_cast<std::size_t>(std::ceil(pos_frac * batch - 1e-12));
  const std::size_t take_pos = std::min(want_pos, pos.size());
  const std::size_t take_neg =
      std::min(static_cast<std::size_t>(batch) - take_pos, neg.size());

  Rng rng(seed);
  MiniBatch mb;
  for (std::size_t i : rng.sample_without_replacement(pos.size(), take_pos)) {
    mb.rois.push_back(targets[pos[i]]);
  }
  for (std::size_t i : rng.sample_without_replacement(neg.size(), take_neg)) {
    mb.rois.push_back(targets[neg[i]]);
  }
  mb.positives = take_pos;
  mb.short_batch = mb.rois.size() < static_cast<std::size_t>(batch);
  return mb;
}

BoxDeltas encode_deltas(const BoundingBox& proposal, const BoundingBox& gt) {
  if (!proposal.valid() || !gt.valid()) {
    fail(ErrorKind::kDomain, "cannot encode deltas for a box without area");
  }
  const double pw = proposal.width(), ph = proposal.height();
  return {(gt.center_x() - proposal.center_x()) / pw,
          (gt.center_y() - proposal.center_y()) / ph,
          std::log(gt.width() / pw), std::log(gt.height() / ph)};
}

BoundingBox decode_deltas(const BoundingBox& proposal,
                          const BoxDeltas& deltas) {
  if (!proposal.valid()) {
    fail(ErrorKind::kDomain, "cannot decode deltas against an empty box");
  }
  for (double v : deltas) {
    if (!std::isfinite(v)) fail(ErrorKind::kDomain, "non-finite box delta");
  }
  if (std::abs(deltas[2]) > kMaxLogScale ||
      std::abs(deltas[3]) > kMaxLogScale) {
    fail(ErrorKind::kEmptyBox, "box delta scale out of range");
  }
  const double pw = proposal.width(), ph = proposal.height();
  const double cx = proposal.center_x() + deltas[0] * pw;
  const double cy = proposal.center_y() + deltas[1] * ph;
  const double w = pw * std::exp(deltas[2]);
  const double h = ph * std::exp(deltas[3]);
  BoundingBox out{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  if (!out.valid()) fail(ErrorKind::kEmptyBox, "decoded box has no area");
  return out;
}

}  // namespace streamdet
