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

#include <filesystem>
#include <string>

#include "doctest.h"
#include "streamdet/binary_io.hpp"
#include "streamdet/error.hpp"
#include "streamdet/io.hpp"
#include "streamdet/rng.hpp"
#include "test_util.hpp"

using namespace streamdet;

namespace {

FeatureMap random_map(Rng& rng, int p, int q, int d, const std::string& id) {
  FeatureMap f(id, p, q, d);
  for (auto& v : f.values) v = static_cast<float>(rng.normal());
  return f;
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("byte reader reports offsets and lengths") {
  ByteWriter w;
  w.put_u32(7);
  w.put_f64(1.5);
  const auto bytes = w.take();
  ByteReader r(bytes, "blob");
  CHECK(r.get_u32() == 7);
  CHECK(r.get_f64() == 1.5);
  CHECK_NOTHROW(r.expect_end());
  ByteReader short_r(std::span<const std::uint8_t>(bytes).first(6), "blob");
  short_r.get_u32();
  const std::string msg = error_of([&] { short_r.get_u32(); });
  CHECK(msg.find("byte offset 4") != std::string::npos);
  CHECK(msg.find("blob") != std::string::npos);
}

TEST_CASE("feature files round-trip bit-exactly") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const int p = 1 + static_cast<int>(rng.uniform_index(6));
    const int q = 1 + static_cast<int>(rng.uniform_index(6));
    const int d = 1 + static_cast<int>(rng.uniform_index(9));
    const FeatureMap f = random_map(rng, p, q, d, "img_" + std::to_string(i));
    const auto bytes = serialize_feature(f);
    CHECK(deserialize_feature(bytes) == f);
  }
  test::TempDir dir;
  const FeatureMap f = random_map(rng, 3, 4, 5, "on_disk");
  write_feature(dir.path() / "a" / "x.rfm", f);
  CHECK(read_feature(dir.path() / "a" / "x.rfm") == f);
}

TEST_CASE("feature file layout is little-endian RFM1") {
  FeatureMap f("ab", 1, 1, 1);
  f.values[0] = 1.0f;
  const auto b = serialize_feature(f);
  const std::vector<std::uint8_t> expected{'R', 'F', 'M', '1', 1, 0, 0, 0, 1, 0,
                                           0,   0,   1,   0,   0, 0, 2, 0, 0, 0,
                                           'a', 'b', 0,   0,   0x80, 0x3f};
  CHECK(b == expected);
}

TEST_CASE("COCO-scale feature file size") {
  FeatureMap f("x", 25, 30, 2048);
  const auto b = serialize_feature(f);
  CHECK(25ull * 30 * 2048 * 4 == 6144000ull);
  // magic + three dims + id length prefix + id + payload
  CHECK(b.size() == 4 + 12 + 4 + 1 + 6144000ull);
}

TEST_CASE("malformed feature files are rejected") {
  Rng rng(1);
  const auto good = serialize_feature(random_map(rng, 2, 2, 3, "img"));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(error_of([&] { deserialize_feature(bad_magic); }).find("magic") !=
        std::string::npos);

  const std::vector<std::uint8_t> truncated(good.begin(), good.end() - 5);
  const std::string msg = error_of([&] { deserialize_feature(truncated); });
  CHECK(msg.find("expected 48") != std::string::npos);
  CHECK(msg.find("43") != std::string::npos);

  auto extra = good;
  extra.push_back(0);
  CHECK_THROWS_AS(deserialize_feature(extra), Error);

  auto nan = good;
  const std::size_t payload = good.size() - 48;
  nan[payload + 2] = 0xc0;
  nan[payload + 3] = 0x7f;
  CHECK_THROWS_AS(deserialize_feature(nan), Error);

  CHECK_THROWS_AS(deserialize_feature(std::span(good).first(3)), Error);
  try {
    deserialize_feature(truncated);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
  }
}

TEST_CASE("annotation JSON round-trip and strict schema") {
  const ImageAnnotation a{"img", 80, 100, {{{0, 0, 10.5, 10}, 1}, {{20, 20, 40, 60}, 3}}};
  CHECK(annotation_from_json(annotation_to_json(a), "t") == a);

  test::TempDir dir;
  write_annotation(dir.path() / "img.json", a);
  CHECK(read_annotation(dir.path() / "img.json") == a);

  Json extra_key = annotation_to_json(a);
  extra_key["colour"] = "red";
  CHECK_THROWS_AS(annotation_from_json(extra_key, "t"), Error);

  Json missing = annotation_to_json(a);
  missing.erase("boxes");
  CHECK(error_of([&] { annotation_from_json(missing, "t"); }).find("boxes") !=
        std::string::npos);

  Json float_h = annotation_to_json(a);
  float_h["image_h"] = 80.5;
  CHECK_THROWS_AS(annotation_from_json(float_h, "t"), Error);

  Json outside = annotation_to_json(a);
  outside["boxes"][0]["box"] = {0, 0, 101, 10};
  CHECK_THROWS_AS(annotation_from_json(outside, "t"), Error);

  Json short_box = annotation_to_json(a);
  short_box["boxes"][0]["box"] = {0, 0, 10};
  CHECK_THROWS_AS(annotation_from_json(short_box, "t"), Error);
}

TEST_CASE("proposal and detection JSON round-trip") {
  const ProposalSet p{"img", {{0.25, 1, 3, 4}, {1.0 / 3.0, 2, 9, 9.75}}};
  CHECK(proposals_from_json(proposals_to_json(p), "t") == p);
  test::TempDir dir;
  write_proposals(dir.path() / "p.json", p);
  CHECK(read_proposals(dir.path() / "p.json") == p);

  const std::vector<Detection> dets{{"a", {0, 0, 1, 1}, 2, 0.75},
                                    {"b", {1, 1, 3, 3}, 1, 0.125}};
  const auto back = detections_from_json(detections_to_json(dets), "t");
  REQUIRE(back.size() == 2);
  CHECK(back[1].image_id == "b");
  CHECK(back[1].score == 0.125);
  Json bad = detections_to_json(dets);
  bad[0]["score"] = 1.5;
  CHECK_THROWS_AS(detections_from_json(bad, "t"), Error);
}

TEST_CASE("json parse errors carry a byte offset") {
  const std::string msg = error_of([] { parse_json("{\"a\": [1, 2", "cfg"); });
  CHECK(msg.find("cfg") != std::string::npos);
  CHECK(msg.find("byte") != std::string::npos);
}

TEST_CASE("atomic writes leave no temporary file") {
  test::TempDir dir;
  write_file_atomic(dir.path() / "out.txt", std::string_view("hello"));
  CHECK(read_file_text(dir.path() / "out.txt") == "hello");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
  CHECK_THROWS_AS(read_file_bytes(dir.path() / "missing.bin"), Error);
}
