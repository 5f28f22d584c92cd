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
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamdet/core.hpp"
#include "streamdet/pq.hpp"

namespace streamdet {

enum class ReplacementPolicy {
  kMin,        // evict the entry with the fewest distinct labels
  kMax,        // evict the entry with the most distinct labels
  kBal,        // evict the entry whose removal leaves class counts most even
  kRandom,     // evict uniformly at random
  kNoReplace,  // never evict; capacity is ignored
};

const char* to_string(ReplacementPolicy p);
ReplacementPolicy parse_policy(const std::string& name);

struct BufferCapacity {
  enum class Mode { kEntries, kBytes };
  Mode mode = Mode::kEntries;
  std::size_t limit = 0;

  static BufferCapacity entries(std::size_t n) { return {Mode::kEntries, n}; }
  static BufferCapacity bytes(std::size_t n) { return {Mode::kBytes, n}; }
};

struct BufferEntry {
  ImageId image_id;
  QuantizedFeatureMap codes;
  ImageAnnotation annotation;
  std::uint64_t insert_seq = 0;

  std::size_t unique_labels() const { return annotation.classes().size(); }
};

struct UpsertReport {
  bool inserted = false;        // false when the image was already stored
  std::size_t boxes_added = 0;
  std::vector<ImageId> evicted;
};

struct BufferStats {
  std::size_t entry_count = 0;
  std::size_t byte_count = 0;
  std::map<ClassId, std::size_t> class_counts;

  bool operator==(const BufferStats&) const = default;
};

struct BufferSample {
  std::vector<BufferEntry> entries;
  bool truncated = false;  // fewer entries were available than requested
};

/// Fixed-capacity store of quantized feature maps and their accumulated
/// annotations. Not thread-safe; one writer mutates it.
class ReplayBuffer {
 public:
  ReplayBuffer(BufferCapacity capacity, ReplacementPolicy policy,
               std::uint64_t seed);

  /// Inserts a new image or appends boxes to a stored one. A new insertion
  /// that overflows capacity evicts per policy, never the new entry.
  UpsertReport upsert(const QuantizedFeatureMap& codes,
                      const ImageAnnotation& annotation);

  /// `n` distinct entries drawn uniformly in insertion order, skipping
  /// `exclude` when given. Returns everything available if `n` is too large.
  BufferSample sample(std::size_t n, std::uint64_t seed,
                      const std::optional<ImageId>& exclude = {}) const;

  /// Victim under `policy`, ties to the oldest entry. `protect` is never
  /// chosen. RANDOM draws from Rng(mix_seed(seed, eviction_count())) over
  /// candidates in insertion order.
  ImageId select_victim(ReplacementPolicy policy,
                        const std::optional<ImageId>& protect = {}) const;

  BufferStats stats() const;
  const std::map<ClassId, std::size_t>& class_counts() const {
    return class_counts_;
  }

  std::size_t size() const { return entries_.size(); }
  bool contains(const ImageId& id) const { return entries_.contains(id); }
  const BufferEntry& entry(const ImageId& id) const;
  /// Entries in insertion order.
  std::vector<const BufferEntry*> ordered_entries() const;

  ReplacementPolicy policy() const { return policy_; }
  BufferCapacity capacity() const { return capacity_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t eviction_count() const { return evictions_; }

  /// Binary checkpoint tied to the pq model that produced the codes.
  std::vector<std::uint8_t> serialize(std::uint64_t pq_fingerprint) const;
  static ReplayBuffer deserialize(std::span<const std::uint8_t> bytes,
                                  std::uint64_t expected_pq_fingerprint,
                                  const std::string& context = "buffer");

 private:
  bool over_capacity() const;
  void remove(const ImageId& id);
  void add_classes(const std::set<ClassId>& classes);

  BufferCapacity capacity_;
  ReplacementPolicy policy_;
  std::uint64_t seed_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t evictions_ = 0;
  std::size_t byte_count_ = 0;
  std::map<ImageId, BufferEntry> entries_;
  std::map<std::uint64_t, ImageId> order_;
  std::map<ClassId, std::size_t> class_counts_;
};

}  // namespace streamdet
