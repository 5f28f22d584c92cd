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

#include "streamdet/io.hpp"

#include <algorithm>
#include <cmath>

#include "streamdet/binary_io.hpp"
#include "streamdet/error.hpp"

namespace streamdet {

void throw_parse_missing(const std::string& context, const char* key) {
  fail(ErrorKind::kParse, context + ": missing required key \"" + key + "\"");
}

void throw_parse_type(const std::string& context, const char* key) {
  fail(ErrorKind::kParse, context + ": key \"" + key + "\" has the wrong type");
}

void require_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                  const std::string& context) {
  if (!j.is_object()) fail(ErrorKind::kParse, context + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorKind::kParse, context + ": unknown key \"" + key + "\"");
    }
  }
}

Json parse_json(std::string_view text, const std::string& context) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, context + ": invalid JSON at byte offset " +
                                std::to_string(e.byte) + " (" + e.what() +
                                ")");
  }
}

Json read_json(const std::filesystem::path& path) {
  return parse_json(read_file_text(path), path.string());
}

void write_json(const std::filesystem::path& path, const Json& j, int indent) {
  write_file_atomic(path, j.dump(indent) + "\n");
}

// ---------------------------------------------------------------- features

std::vector<std::uint8_t> serialize_feature(const FeatureMap& fmap) {
  fmap.validate();
  ByteWriter w;
  w.put_magic("RFM1");
  w.put_u32(static_cast<std::uint32_t>(fmap.grid_h));
  w.put_u32(static_cast<std::uint32_t>(fmap.grid_w));
  w.put_u32(static_cast<std::uint32_t>(fmap.channels));
  w.put_string(fmap.image_id);
  for (float v : fmap.values) w.put_f32(v);
  return w.take();
}

FeatureMap deserialize_feature(std::span<const std::uint8_t> bytes,
                               const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("RFM1");
  const std::uint32_t p = r.get_u32();
  const std::uint32_t q = r.get_u32();
  const std::uint32_t d = r.get_u32();
  if (p == 0 || q == 0 || d == 0) r.error("zero grid or channel dimension");
  std::string id = r.get_string();
  const std::uint64_t expected = 4ull * p * q * d;
  if (r.remaining() != expected) {
    r.error("payload holds " + std::to_string(r.remaining()) +
            " bytes, expected " + std::to_string(expected));
  }
  FeatureMap fmap;
  fmap.image_id = std::move(id);
  fmap.grid_h = static_cast<int>(p);
  fmap.grid_w = static_cast<int>(q);
  fmap.channels = static_cast<int>(d);
  fmap.values.resize(static_cast<std::size_t>(p) * q * d);
  for (auto& v : fmap.values) {
    v = r.get_f32();
    if (!std::isfinite(v)) r.error("non-finite feature value");
  }
  return fmap;
}

FeatureMap read_feature(const std::filesystem::path& path) {
  return deserialize_feature(read_file_bytes(path), path.string());
}

void write_feature(const std::filesystem::path& path, const FeatureMap& fmap) {
  write_file_atomic(path, serialize_feature(fmap));
}

// ------------------------------------------------------------- annotations

namespace {

Json box_to_json(const BoundingBox& b) { return Json{b.x1, b.y1, b.x2, b.y2}; }

BoundingBox box_from_json(const Json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 4) {
    fail(ErrorKind::kParse, context + ": box must be [x1, y1, x2, y2]");
  }
  std::array<double, 4> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) {
      fail(ErrorKind::kParse, context + ": box coordinate is not a number");
    }
    v[i] = j[i].get<double>();
  }
  BoundingBox b{v[0], v[1], v[2], v[3]};
  if (!b.valid()) fail(ErrorKind::kParse, context + ": box has no area");
  return b;
}

}  // namespace

Json annotation_to_json(const ImageAnnotation& ann) {
  Json boxes = Json::array();
  for (const auto& b : ann.boxes) {
    boxes.push_back({{"box", box_to_json(b.box)}, {"class_id", b.class_id}});
  }
  return {{"image_id", ann.image_id},
          {"image_h", ann.image_h},
          {"image_w", ann.image_w},
          {"boxes", std::move(boxes)}};
}

ImageAnnotation annotation_from_json(const Json& j,
                                     const std::string& context) {
  require_keys(j, {"image_id", "image_h", "image_w", "boxes"}, context);
  ImageAnnotation ann;
  ann.image_id = json_field<std::string>(j, "image_id", context);
  ann.image_h = json_field<int>(j, "image_h", context);
  ann.image_w = json_field<int>(j, "image_w", context);
  if (!j.contains("boxes")) throw_parse_missing(context, "boxes");
  const Json& boxes = j.at("boxes");
  if (!boxes.is_array()) throw_parse_type(context, "boxes");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const std::string ctx = context + ": boxes[" + std::to_string(i) + "]";
    require_keys(boxes[i], {"box", "class_id"}, ctx);
    if (!boxes[i].contains("box")) throw_parse_missing(ctx, "box");
    ann.boxes.push_back({box_from_json(boxes[i].at("box"), ctx),
                         json_field<int>(boxes[i], "class_id", ctx)});
  }
  try {
    ann.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kParse, context + ": " + e.what());
  }
  return ann;
}

ImageAnnotation read_annotation(const std::filesystem::path& path) {
  return annotation_from_json(read_json(path), path.string());
}

void write_annotation(const std::filesystem::path& path,
                      const ImageAnnotation& ann) {
  write_json(path, annotation_to_json(ann));
}

// --------------------------------------------------------------- proposals

Json proposals_to_json(const ProposalSet& p) {
  Json boxes = Json::array();
  for (const auto& b : p.boxes) boxes.push_back(box_to_json(b));
  return {{"image_id", p.image_id}, {"boxes", std::move(boxes)}};
}

ProposalSet proposals_from_json(const Json& j, const std::string& context) {
  require_keys(j, {"image_id", "boxes"}, context);
  ProposalSet p;
  p.image_id = json_field<std::string>(j, "image_id", context);
  if (!j.contains("boxes")) throw_parse_missing(context, "boxes");
  const Json& boxes = j.at("boxes");
  if (!boxes.is_array()) throw_parse_type(context, "boxes");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    p.boxes.push_back(
        box_from_json(boxes[i], context + ": boxes[" + std::to_string(i) + "]"));
  }
  return p;
}

ProposalSet read_proposals(const std::filesystem::path& path) {
  return proposals_from_json(read_json(path), path.string());
}

void write_proposals(const std::filesystem::path& path, const ProposalSet& p) {
  write_json(path, proposals_to_json(p), -1);
}

// -------------------------------------------------------------- detections

Json detections_to_json(std::span<const Detection> dets) {
  Json out = Json::array();
  for (const auto& d : dets) {
    out.push_back({{"image_id", d.image_id},
                   {"class_id", d.class_id},
                   {"score", d.score},
                   {"box", box_to_json(d.box)}});
  }
  return out;
}

std::vector<Detection> detections_from_json(const Json& j,
                                            const std::string& context) {
  if (!j.is_array()) fail(ErrorKind::kParse, context + ": expected an array");
  std::vector<Detection> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string ctx = context + "[" + std::to_string(i) + "]";
    require_keys(j[i], {"image_id", "class_id", "score", "box"}, ctx);
    Detection d;
    d.image_id = json_field<std::string>(j[i], "image_id", ctx);
    d.class_id = json_field<int>(j[i], "class_id", ctx);
    d.score = json_field<double>(j[i], "score", ctx);
    if (!j[i].contains("box")) throw_parse_missing(ctx, "box");
    d.box = box_from_json(j[i].at("box"), ctx);
    if (d.class_id < 1 || !std::isfinite(d.score) || d.score < 0 ||
        d.score > 1) {
      fail(ErrorKind::kParse, ctx + ": class_id must be >= 1 and score in [0, 1]");
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace streamdet
