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
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "streamdet/core.hpp"
#include "streamdet/targets.hpp"

namespace streamdet {

using Json = nlohmann::json;

// Feature files: "RFM1", u32 p, q, d, u32 id length + UTF-8 id bytes, then
// p*q*d little-endian float32 values in (row, col, channel) order.
std::vector<std::uint8_t> serialize_feature(const FeatureMap& fmap);
FeatureMap deserialize_feature(std::span<const std::uint8_t> bytes,
                               const std::string& context = "feature file");
FeatureMap read_feature(const std::filesystem::path& path);
void write_feature(const std::filesystem::path& path, const FeatureMap& fmap);

// Annotations: {"image_id", "image_h", "image_w",
//               "boxes": [{"box": [x1, y1, x2, y2], "class_id": k}, ...]}
Json annotation_to_json(const ImageAnnotation& ann);
ImageAnnotation annotation_from_json(const Json& j, const std::string& context);
ImageAnnotation read_annotation(const std::filesystem::path& path);
void write_annotation(const std::filesystem::path& path,
                      const ImageAnnotation& ann);

// Proposals: {"image_id", "boxes": [[x1, y1, x2, y2], ...]}
Json proposals_to_json(const ProposalSet& p);
ProposalSet proposals_from_json(const Json& j, const std::string& context);
ProposalSet read_proposals(const std::filesystem::path& path);
void write_proposals(const std::filesystem::path& path, const ProposalSet& p);

// Detections: [{"image_id", "class_id", "score", "box": [...]}, ...]
Json detections_to_json(std::span<const Detection> dets);
std::vector<Detection> detections_from_json(const Json& j,
                                            const std::string& context);

/// Parses JSON text; syntax errors become kParse with the byte offset.
Json parse_json(std::string_view text, const std::string& context);
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j,
                int indent = 2);

/// Throws kParse if `j` is not an object or has keys outside `allowed`.
void require_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                  const std::string& context);

[[noreturn]] void throw_parse_missing(const std::string& context,
                                      const char* key);
[[noreturn]] void throw_parse_type(const std::string& context, const char* key);

template <typename T>
T json_field(const Json& j, const char* key, const std::string& context) {
  if (!j.contains(key)) {
    throw_parse_missing(context, key);
  }
  const Json& v = j.at(key);
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    if (!v.is_number_integer()) throw_parse_type(context, key);
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw_parse_type(context, key);
  }
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw_parse_type(context, key);
  }
}

}  // namespace streamdet
