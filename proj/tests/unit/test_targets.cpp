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

#include <cmath>

#include "doctest.h"
#include "streamdet/error.hpp"
#include "streamdet/rng.hpp"
#include "streamdet/targets.hpp"

using namespace streamdet;

namespace {

ImageAnnotation gt_of(std::vector<LabeledBox> boxes) {
  return ImageAnnotation{"img", 100, 100, std::move(boxes)};
}

std::vector<RoiTarget> make_targets(int fg, int bg) {
  std::vector<RoiTarget> out;
  for (int i = 0; i < fg; ++i) {
    out.push_back({{0, 0, 1.0 + i, 1}, 1, {}, 0, 0.9});
  }
  for (int i = 0; i < bg; ++i) {
    out.push_back({{0, 0, 1, 1.0 + i}, kBackground, {}, std::nullopt, 0});
  }
  return out;
}

}  // namespace

TEST_CASE("a proposal equal to its ground truth is foreground with zero deltas") {
  const auto t = label_proposals({"img", {{10, 10, 30, 40}}},
                                 gt_of({{{10, 10, 30, 40}, 3}}), {3});
  REQUIRE(t.size() == 1);
  CHECK(t[0].class_id == 3);
  CHECK(t[0].max_iou == doctest::Approx(1.0));
  CHECK(t[0].matched_gt == 0u);
  for (double d : t[0].deltas) CHECK(d == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("low overlap is background") {
  const auto t = label_proposals({"img", {{0, 0, 10, 3}, {50, 50, 60, 60}}},
                                 gt_of({{{0, 0, 10, 10}, 1}}), {1});
  CHECK(t[0].class_id == kBackground);
  CHECK(t[0].max_iou == doctest::Approx(0.3));
  CHECK(t[0].matched_gt == 0u);
  CHECK(t[1].class_id == kBackground);
  CHECK_FALSE(t[1].matched_gt.has_value());
  for (double d : t[0].deltas) CHECK(d == 0.0);
}

TEST_CASE("the foreground threshold is strict") {
  const auto t = label_proposals({"img", {{0, 0, 10, 10}}},
                                 gt_of({{{0, 0, 10, 5}, 1}}), {1});
  CHECK(t[0].max_iou == doctest::Approx(0.5));
  CHECK(t[0].class_id == kBackground);
}

TEST_CASE("a proposal takes the label of its best visible match") {
  const ProposalSet p{"img", {{0, 0, 10, 10}}};
  const auto gt = gt_of({{{0, 0, 10, 6}, 1}, {{0, 0, 10, 7}, 2}});
  const auto both = label_proposals(p, gt, {1, 2});
  CHECK(both[0].class_id == 2);
  CHECK(both[0].matched_gt == 1u);
  CHECK(both[0].max_iou == doctest::Approx(0.7));
  const auto only1 = label_proposals(p, gt, {1});
  CHECK(only1[0].class_id == 1);
  CHECK(only1[0].max_iou == doctest::Approx(0.6));
  const auto none = label_proposals(p, gt, {});
  CHECK(none[0].class_id == kBackground);
}

TEST_CASE("proposals for another image are rejected") {
  CHECK_THROWS_AS(label_proposals({"other", {{0, 0, 1, 1}}}, gt_of({}), {}), Error);
}

TEST_CASE("minibatch composition") {
  SUBCASE("plenty of both") {
    const auto t = make_targets(100, 1900);
    const auto mb = sample_minibatch(t, 1);
    CHECK(mb.positives == 16);
    CHECK(mb.rois.size() == 64);
    CHECK_FALSE(mb.short_batch);
    for (std::size_t i = 0; i < mb.rois.size(); ++i) {
      CHECK(mb.rois[i].foreground() == (i < 16));
    }
  }
  SUBCASE("no positives") {
    const auto mb = sample_minibatch(make_targets(0, 500), 1);
    CHECK(mb.positives == 0);
    CHECK(mb.rois.size() == 64);
  }
  SUBCASE("too few of everything") {
    const auto mb = sample_minibatch(make_targets(5, 10), 1);
    CHECK(mb.positives == 5);
    CHECK(mb.rois.size() == 15);
    CHECK(mb.short_batch);
  }
  SUBCASE("positives stay capped when backgrounds run out") {
    const auto mb = sample_minibatch(make_targets(100, 10), 1);
    CHECK(mb.positives == 16);
    CHECK(mb.rois.size() == 26);
    CHECK(mb.short_batch);
  }
}

TEST_CASE("minibatch sampling is a deterministic function of the seed") {
  const auto t = make_targets(100, 1900);
  const auto a = sample_minibatch(t, 42);
  const auto b = sample_minibatch(t, 42);
  const auto c = sample_minibatch(t, 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.rois.size(); ++i) {
    CHECK(a.rois[i].box == b.rois[i].box);
    differs = differs || !(a.rois[i].box == c.rois[i].box);
  }
  CHECK(differs);
}

TEST_CASE("delta fixtures") {
  const BoundingBox p{0, 0, 10, 10};
  const auto shift = encode_deltas(p, {5, 0, 15, 10});
  CHECK(shift[0] == doctest::Approx(0.5));
  CHECK(shift[1] == doctest::Approx(0.0));
  CHECK(shift[2] == doctest::Approx(0.0));
  CHECK(shift[3] == doctest::Approx(0.0));
  const auto wide = encode_deltas(p, {0, 0, 20, 10});
  CHECK(wide[0] == doctest::Approx(0.5));
  CHECK(wide[2] == doctest::Approx(std::log(2.0)));
  CHECK(wide[3] == doctest::Approx(0.0));
}

TEST_CASE("decode inverts encode") {
  Rng rng(3);
  auto random_box = [&] {
    const double x = rng.uniform(0, 500), y = rng.uniform(0, 500);
    return BoundingBox{x, y, x + rng.uniform(1, 300), y + rng.uniform(1, 300)};
  };
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const BoundingBox p = random_box(), g = random_box();
    const BoundingBox back = decode_deltas(p, encode_deltas(p, g));
    worst = std::max({worst, std::abs(back.x1 - g.x1), std::abs(back.y1 - g.y1),
                      std::abs(back.x2 - g.x2), std::abs(back.y2 - g.y2)});
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("decode rejects runaway scales and bad inputs") {
  const BoundingBox p{0, 0, 10, 10};
  CHECK_THROWS_AS(decode_deltas(p, {0, 0, 50, 0}), Error);
  CHECK_THROWS_AS(decode_deltas(p, {0, 0, 0, -50}), Error);
  CHECK_THROWS_AS(decode_deltas(p, {NAN, 0, 0, 0}), Error);
  CHECK_THROWS_AS(decode_deltas({0, 0, 0, 10}, {0, 0, 0, 0}), Error);
  CHECK_THROWS_AS(encode_deltas({0, 0, 0, 10}, p), Error);
}
