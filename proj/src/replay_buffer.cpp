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

#include "streamdet/replay_buffer.hpp"

#include <algorithm>

#include "streamdet/binary_io.hpp"
#include "streamdet/error.hpp"
#include "streamdet/io.hpp"
#include "streamdet/rng.hpp"

namespace streamdet {

const char* to_string(ReplacementPolicy p) {
  switch (p) {
    case ReplacementPolicy::kMin: return "MIN";
    case ReplacementPolicy::kMax: return "MAX";
    case ReplacementPolicy::kBal: return "BAL";
    case ReplacementPolicy::kRandom: return "RANDOM";
    case ReplacementPolicy::kNoReplace: return "NO_REPLACE";
  }
  return "?";
}

ReplacementPolicy parse_policy(const std::string& name) {
  for (auto p : {ReplacementPolicy::kMin, ReplacementPolicy::kMax,
                 ReplacementPolicy::kBal, ReplacementPolicy::kRandom,
                 ReplacementPolicy::kNoReplace}) {
    if (name == to_string(p)) return p;
  }
  if (name == "NO-REPLACE") return ReplacementPolicy::kNoReplace;
  fail(ErrorKind::kConfig, "unknown replacement policy '" + name + "'");
}

ReplayBuffer::ReplayBuffer(BufferCapacity capacity, ReplacementPolicy policy,
                           std::uint64_t seed)
    : capacity_(capacity), policy_(policy), seed_(seed) {
  if (capacity_.limit == 0 && policy_ != ReplacementPolicy::kNoReplace) {
    fail(ErrorKind::kConfig, "replay buffer capacity must be positive");
  }
}

bool ReplayBuffer::over_capacity() const {
  if (policy_ == ReplacementPolicy::kNoReplace) return false;
  if (capacity_.mode == BufferCapacity::Mode::kEntries) {
    return entries_.size() > capacity_.limit;
  }
  return byte_count_ > capacity_.limit;
}

void ReplayBuffer::add_classes(const std::set<ClassId>& classes) {
  for (ClassId c : classes) ++class_counts_[c];
}

void ReplayBuffer::remove(const ImageId& id) {
  auto it = entries_.find(id);
  for (ClassId c : it->second.annotation.classes()) {
    if (--class_counts_[c] == 0) class_counts_.erase(c);
  }
  byte_count_ -= it->second.codes.byte_count();
  order_.erase(it->second.insert_seq);
  entries_.erase(it);
}

UpsertReport ReplayBuffer::upsert(const QuantizedFeatureMap& codes,
                                  const ImageAnnotation& annotation) {
  if (annotation.boxes.empty()) {
    fail(ErrorKind::kPrecondition,
         "upsert of '" + annotation.image_id + "' without boxes");
  }
  if (codes.image_id != annotation.image_id) {
    fail(ErrorKind::kPrecondition, "codes for '" + codes.image_id +
                                       "' paired with annotation for '" +
                                       annotation.image_id + "'");
  }
  UpsertReport report;
  if (auto it = entries_.find(codes.image_id); it != entries_.end()) {
    auto& ann = it->second.annotation;
    const auto before = ann.classes();
    report.boxes_added = ann.append_unique(annotation.boxes);
    std::set<ClassId> fresh;
    for (ClassId c : ann.classes()) {
      if (!before.contains(c)) fresh.insert(c);
    }
    add_classes(fresh);
    return report;
  }

  BufferEntry entry{codes.image_id, codes,
                    ImageAnnotation{annotation.image_id, annotation.image_h,
                                    annotation.image_w, {}},
                    next_seq_++};
  report.boxes_added = entry.annotation.append_unique(annotation.boxes);
  add_classes(entry.annotation.classes());
  byte_count_ += codes.byte_count();
  order_.emplace(entry.insert_seq, entry.image_id);
  entries_.emplace(entry.image_id, std::move(entry));
  report.inserted = true;

  while (over_capacity() && entries_.size() > 1) {
    ImageId victim = select_victim(policy_, codes.image_id);
    remove(victim);
    ++evictions_;
    report.evicted.push_back(std::move(victim));
  }
  return report;
}

ImageId ReplayBuffer::select_victim(ReplacementPolicy policy,
                                    const std::optional<ImageId>& protect) const {
  if (policy == ReplacementPolicy::kNoReplace) {
    fail(ErrorKind::kPolicy, "NO_REPLACE never selects a victim");
  }
  std::vector<const BufferEntry*> candidates;
  for (const auto& [seq, id] : order_) {
    if (protect && id == *protect) continue;
    candidates.push_back(&entries_.at(id));
  }
  if (candidates.empty()) {
    fail(ErrorKind::kPolicy, "no eviction candidate in the buffer");
  }

  if (policy == ReplacementPolicy::kRandom) {
    Rng rng(mix_seed(seed_, evictions_));
    return candidates[rng.uniform_index(candidates.size())]->image_id;
  }

  // Candidates are in insertion order, so strict improvement keeps ties on
  // the oldest entry.
  const BufferEntry* best = nullptr;
  if (policy == ReplacementPolicy::kMin || policy == ReplacementPolicy::kMax) {
    std::size_t best_labels = 0;
    for (const BufferEntry* e : candidates) {
      const std::size_t labels = e->unique_labels();
      const bool better = policy == ReplacementPolicy::kMin
                              ? labels < best_labels
                              : labels > best_labels;
      if (best == nullptr || better) {
        best = e;
        best_labels = labels;
      }
    }
    return best->image_id;
  }

  // BAL: minimize the variance of class counts after removal, taken over the
  // classes present now. K^2 * variance = K * sum(c^2) - (sum c)^2 is an
  // integer, so comparisons are exact.
  const auto k = static_cast<std::int64_t>(class_counts_.size());
  std::int64_t sum = 0, sumsq = 0;
  for (const auto& [c, n] : class_counts_) {
    sum += static_cast<std::int64_t>(n);
    sumsq += static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n);
  }
  std::int64_t best_score = 0;
  for (const BufferEntry* e : candidates) {
    std::int64_t s = sum, q = sumsq;
    for (ClassId c : e->annotation.classes()) {
      const auto n = static_cast<std::int64_t>(class_counts_.at(c));
      s -= 1;
      q += -2 * n + 1;
    }
    const std::int64_t score = k * q - s * s;
    if (best == nullptr || score < best_score) {
      best = e;
      best_score = score;
    }
  }
  return best->image_id;
}

BufferSample ReplayBuffer::sample(std::size_t n, std::uint64_t seed,
                                  const std::optional<ImageId>& exclude) const {
  std::vector<const BufferEntry*> pool;
  for (const auto& [seq, id] : order_) {
    if (exclude && id == *exclude) continue;
    pool.push_back(&entries_.at(id));
  }
  BufferSample out;
  if (n > pool.size()) {
    out.truncated = true;
    n = pool.size();
  }
  Rng rng(seed);
  for (std::size_t i : rng.sample_without_replacement(pool.size(), n)) {
    out.entries.push_back(*pool[i]);
  }
  return out;
}

BufferStats ReplayBuffer::stats() const {
  return {entries_.size(), byte_count_, class_counts_};
}

const BufferEntry& ReplayBuffer::entry(const ImageId& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) {
    fail(ErrorKind::kDomain, "image '" + id + "' is not in the buffer");
  }
  return it->second;
}

std::vector<const BufferEntry*> ReplayBuffer::ordered_entries() const {
  std::vector<const BufferEntry*> out;
  out.reserve(order_.size());
  for (const auto& [seq, id] : order_) out.push_back(&entries_.at(id));
  return out;
}

std::vector<std::uint8_t> ReplayBuffer::serialize(
    std::uint64_t pq_fingerprint) const {
  ByteWriter w;
  w.put_magic("RBUF");
  w.put_u32(1);
  w.put_u64(pq_fingerprint);
  w.put_u32(static_cast<std::uint32_t>(policy_));
  w.put_u32(static_cast<std::uint32_t>(capacity_.mode));
  w.put_u64(capacity_.limit);
  w.put_u64(seed_);
  w.put_u64(next_seq_);
  w.put_u64(evictions_);
  w.put_u32(static_cast<std::uint32_t>(entries_.size()));
  for (const BufferEntry* e : ordered_entries()) {
    w.put_string(e->image_id);
    w.put_u64(e->insert_seq);
    w.put_u32(static_cast<std::uint32_t>(e->codes.grid_h));
    w.put_u32(static_cast<std::uint32_t>(e->codes.grid_w));
    w.put_u32(static_cast<std::uint32_t>(e->codes.num_codebooks));
    w.put_bytes(e->codes.codes);
    w.put_string(annotation_to_json(e->annotation).dump());
  }
  return w.take();
}

ReplayBuffer ReplayBuffer::deserialize(std::span<const std::uint8_t> bytes,
                                       std::uint64_t expected_pq_fingerprint,
                                       const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("RBUF");
  if (r.get_u32() != 1) r.error("unsupported buffer checkpoint version");
  if (r.get_u64() != expected_pq_fingerprint) {
    r.error("checkpoint was written for a different pq model");
  }
  const std::uint32_t policy = r.get_u32();
  const std::uint32_t mode = r.get_u32();
  if (policy > static_cast<std::uint32_t>(ReplacementPolicy::kNoReplace) ||
      mode > 1) {
    r.error("invalid policy or capacity mode");
  }
  BufferCapacity cap{static_cast<BufferCapacity::Mode>(mode), r.get_u64()};
  const std::uint64_t seed = r.get_u64();
  ReplayBuffer buf(cap, static_cast<ReplacementPolicy>(policy), seed);
  const std::uint64_t next_seq = r.get_u64();
  buf.evictions_ = r.get_u64();
  const std::uint32_t count = r.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    BufferEntry e;
    e.image_id = r.get_string();
    e.insert_seq = r.get_u64();
    e.codes.image_id = e.image_id;
    e.codes.grid_h = static_cast<int>(r.get_u32());
    e.codes.grid_w = static_cast<int>(r.get_u32());
    e.codes.num_codebooks = static_cast<int>(r.get_u32());
    auto raw = r.get_bytes(static_cast<std::size_t>(e.codes.grid_h) *
                           e.codes.grid_w * e.codes.num_codebooks);
    e.codes.codes.assign(raw.begin(), raw.end());
    e.annotation = annotation_from_json(
        parse_json(r.get_string(), context), context + ": entry " + e.image_id);
    if (e.annotation.image_id != e.image_id || e.annotation.boxes.empty() ||
        e.insert_seq >= next_seq || buf.entries_.contains(e.image_id) ||
        buf.order_.contains(e.insert_seq)) {
      r.error("inconsistent entry '" + e.image_id + "'");
    }
    buf.add_classes(e.annotation.classes());
    buf.byte_count_ += e.codes.byte_count();
    buf.order_.emplace(e.insert_seq, e.image_id);
    buf.entries_.emplace(e.image_id, std::move(e));
  }
  r.expect_end();
  buf.next_seq_ = next_seq;
  return buf;
}

}  // namespace streamdet
