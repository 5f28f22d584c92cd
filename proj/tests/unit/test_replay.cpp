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

#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "streamdet/error.hpp"
#include "streamdet/replay_buffer.hpp"
#include "streamdet/rng.hpp"

using namespace streamdet;

namespace {

QuantizedFeatureMap codes_for(const ImageId& id, int p = 2, int q = 2, int s = 2) {
  QuantizedFeatureMap c{id, p, q, s, {}};
  c.codes.assign(static_cast<std::size_t>(p) * q * s, 1);
  return c;
}

/// One box per class, laid out left to right.
ImageAnnotation annotation_for(const ImageId& id, const std::set<ClassId>& classes) {
  ImageAnnotation a{id, 100, 100, {}};
  double x = 0;
  for (ClassId c : classes) {
    a.boxes.push_back({{x, 0, x + 5, 5}, c});
    x += 5;
  }
  return a;
}

void put(ReplayBuffer& b, const ImageId& id, const std::set<ClassId>& classes) {
  b.upsert(codes_for(id), annotation_for(id, classes));
}

}  // namespace

TEST_CASE("MIN and MAX eviction fixtures") {
  for (auto [policy, victim] :
       {std::pair{ReplacementPolicy::kMin, "A"}, std::pair{ReplacementPolicy::kMax, "B"}}) {
    ReplayBuffer b(BufferCapacity::entries(3), policy, 0);
    put(b, "A", {1});
    put(b, "B", {1, 2, 3});
    put(b, "C", {1, 2});
    const UpsertReport r = b.upsert(codes_for("D"), annotation_for("D", {4, 5}));
    CHECK(r.inserted);
    REQUIRE(r.evicted.size() == 1);
    CHECK(r.evicted[0] == victim);
    CHECK(b.size() == 3);
    CHECK(b.contains("D"));
  }
}

TEST_CASE("ties go to the oldest entry") {
  ReplayBuffer b(BufferCapacity::entries(3), ReplacementPolicy::kMin, 0);
  put(b, "A", {1});
  put(b, "B", {2});
  put(b, "C", {1, 2, 3, 4, 5});
  CHECK(b.select_victim(ReplacementPolicy::kMin) == "A");
  put(b, "D", {7});
  CHECK_FALSE(b.contains("A"));
  CHECK(b.select_victim(ReplacementPolicy::kMin) == "B");
}

TEST_CASE("the new entry is never evicted") {
  ReplayBuffer b(BufferCapacity::entries(2), ReplacementPolicy::kMin, 0);
  put(b, "A", {1, 2});
  put(b, "B", {1, 2});
  const auto r = b.upsert(codes_for("C"), annotation_for("C", {1}));
  CHECK(r.evicted == std::vector<ImageId>{"A"});
  CHECK(b.contains("C"));
}

TEST_CASE("upsert merges annotations of a stored image") {
  ReplayBuffer b(BufferCapacity::entries(3), ReplacementPolicy::kMin, 0);
  put(b, "A", {1});
  put(b, "B", {2});
  auto codes = codes_for("A");
  codes.codes.assign(codes.codes.size(), 7);
  const auto r = b.upsert(codes, annotation_for("A", {1, 3}));
  CHECK_FALSE(r.inserted);
  CHECK(r.boxes_added == 1);
  CHECK(r.evicted.empty());
  CHECK(b.size() == 2);
  CHECK(b.entry("A").unique_labels() == 2);
  CHECK(b.entry("A").codes.codes[0] == 1);
  CHECK(b.class_counts().at(3) == 1);
  CHECK(b.class_counts().at(1) == 1);
}

TEST_CASE("upsert preconditions") {
  ReplayBuffer b(BufferCapacity::entries(3), ReplacementPolicy::kMin, 0);
  CHECK_THROWS_AS(b.upsert(codes_for("A"), ImageAnnotation{"A", 10, 10, {}}), Error);
  CHECK_THROWS_AS(b.upsert(codes_for("A"), annotation_for("B", {1})), Error);
  try {
    ReplayBuffer zero(BufferCapacity::entries(0), ReplacementPolicy::kMin, 0);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  CHECK_NOTHROW(ReplayBuffer(BufferCapacity::entries(0), ReplacementPolicy::kNoReplace, 0));
}

TEST_CASE("NO_REPLACE grows without bound and refuses victims") {
  ReplayBuffer b(BufferCapacity::entries(2), ReplacementPolicy::kNoReplace, 0);
  for (int i = 0; i < 10; ++i) put(b, "img" + std::to_string(i), {1 + i % 3});
  put(b, "img3", {9});
  CHECK(b.size() == 10);
  try {
    b.select_victim(ReplacementPolicy::kNoReplace);
    FAIL("expected a policy error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kPolicy);
  }
}

TEST_CASE("single-entry buffer is its own victim under every policy") {
  ReplayBuffer b(BufferCapacity::entries(5), ReplacementPolicy::kMin, 3);
  put(b, "only", {4});
  for (auto p : {ReplacementPolicy::kMin, ReplacementPolicy::kMax,
                 ReplacementPolicy::kBal, ReplacementPolicy::kRandom}) {
    CHECK(b.select_victim(p) == "only");
  }
}

TEST_CASE("BAL picks an entry of the dominant class") {
  ReplayBuffer b(BufferCapacity::entries(100), ReplacementPolicy::kBal, 0);
  put(b, "r1", {2});
  put(b, "r2", {3});
  for (int i = 0; i < 6; ++i) put(b, "k" + std::to_string(i), {1});
  put(b, "mix", {1, 2});
  const ImageId v = b.select_victim(ReplacementPolicy::kBal);
  CHECK(b.entry(v).annotation.has_class(1));
  CHECK(v == "k0");
}

TEST_CASE("stats and byte accounting") {
  ReplayBuffer b(BufferCapacity::entries(10), ReplacementPolicy::kMin, 0);
  CHECK(b.stats() == BufferStats{0, 0, {}});
  b.upsert(codes_for("big", 25, 30, 64), annotation_for("big", {1}));
  CHECK(b.stats().byte_count == 48000);
  CHECK(b.stats().entry_count == 1);
  CHECK(BufferCapacity::entries(17668).limit == 17668);
}

TEST_CASE("byte capacity evicts until within the limit") {
  ReplayBuffer b(BufferCapacity::bytes(20), ReplacementPolicy::kMin, 0);
  b.upsert(codes_for("a", 2, 2, 2), annotation_for("a", {1}));  // 8 bytes
  b.upsert(codes_for("b", 2, 2, 2), annotation_for("b", {2}));  // 16
  const auto r = b.upsert(codes_for("c", 3, 2, 2), annotation_for("c", {3}));  // 28
  CHECK(r.evicted == std::vector<ImageId>{"a"});
  CHECK(b.stats().byte_count == 20);
  const auto r2 = b.upsert(codes_for("d", 3, 3, 2), annotation_for("d", {4}));  // 38
  CHECK(r2.evicted == std::vector<ImageId>{"b", "c"});
  CHECK(b.stats().byte_count == 18);
}

TEST_CASE("sampling") {
  ReplayBuffer b(BufferCapacity::entries(20), ReplacementPolicy::kMin, 0);
  for (int i = 0; i < 10; ++i) put(b, "i" + std::to_string(i), {1});
  const auto all = b.sample(10, 4);
  CHECK_FALSE(all.truncated);
  std::set<ImageId> ids;
  for (const auto& e : all.entries) ids.insert(e.image_id);
  CHECK(ids.size() == 10);

  const auto four = b.sample(4, 8);
  std::set<ImageId> four_ids;
  for (const auto& e : four.entries) four_ids.insert(e.image_id);
  CHECK(four_ids.size() == 4);
  const auto again = b.sample(4, 8);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(again.entries[i].image_id == four.entries[i].image_id);
  }

  const auto excl = b.sample(9, 1, ImageId("i3"));
  for (const auto& e : excl.entries) CHECK(e.image_id != "i3");
  const auto over = b.sample(30, 1);
  CHECK(over.truncated);
  CHECK(over.entries.size() == 10);
}

TEST_CASE("randomized upserts agree with the rescanning oracle") {
  for (auto policy : {ReplacementPolicy::kMin, ReplacementPolicy::kMax,
                      ReplacementPolicy::kBal, ReplacementPolicy::kRandom,
                      ReplacementPolicy::kNoReplace}) {
    CAPTURE(to_string(policy));
    ReplayBuffer b(BufferCapacity::entries(12), policy, 77);
    oracle::BufferMirror mirror(12, policy, 77);
    Rng rng(5);
    for (int step = 0; step < 600; ++step) {
      const ImageId id = "img" + std::to_string(rng.uniform_index(40));
      std::set<ClassId> classes;
      const std::size_t n = 1 + rng.uniform_index(3);
      while (classes.size() < n) classes.insert(1 + static_cast<ClassId>(rng.uniform_index(6)));
      const auto expected = mirror.upsert(id, classes);
      const auto r = b.upsert(codes_for(id), annotation_for(id, classes));
      if (expected) {
        REQUIRE(r.evicted.size() == 1);
        CHECK(r.evicted[0] == *expected);
      } else {
        CHECK(r.evicted.empty());
      }
      CHECK(b.class_counts() == mirror.recount());
      if (policy != ReplacementPolicy::kNoReplace) CHECK(b.size() <= 12);
    }
  }
}

TEST_CASE("checkpoint round-trip and fingerprint check") {
  ReplayBuffer b(BufferCapacity::entries(5), ReplacementPolicy::kBal, 9);
  for (int i = 0; i < 8; ++i) put(b, "i" + std::to_string(i), {1 + i % 4, 5});
  const auto bytes = b.serialize(1234);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RBUF");
  const ReplayBuffer back = ReplayBuffer::deserialize(bytes, 1234);
  CHECK(back.stats() == b.stats());
  CHECK(back.eviction_count() == b.eviction_count());
  CHECK(back.serialize(1234) == bytes);
  const auto ids = back.ordered_entries();
  const auto orig = b.ordered_entries();
  REQUIRE(ids.size() == orig.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CHECK(ids[i]->image_id == orig[i]->image_id);
    CHECK(ids[i]->annotation == orig[i]->annotation);
  }
  CHECK_THROWS_AS(ReplayBuffer::deserialize(bytes, 999), Error);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(ReplayBuffer::deserialize(cut, 1234), Error);
}

TEST_CASE("policy names") {
  CHECK(parse_policy("NO_REPLACE") == ReplacementPolicy::kNoReplace);
  CHECK(parse_policy("NO-REPLACE") == ReplacementPolicy::kNoReplace);
  CHECK(std::string(to_string(ReplacementPolicy::kBal)) == "BAL");
  CHECK_THROWS_AS(parse_policy("LRU"), Error);
}
