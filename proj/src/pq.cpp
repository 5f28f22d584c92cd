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

#include "streamdet/pq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "streamdet/binary_io.hpp"
#include "streamdet/error.hpp"
#include "streamdet/rng.hpp"

namespace streamdet {

namespace {

double squared_distance(std::span<const float> a, const double* b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - b[i];
    acc += diff * diff;
  }
  return acc;
}

// Index of the nearest centroid; ties go to the lowest index.
int nearest(std::span<const float> x, const std::vector<double>& centroids,
            int k, int dim, double* best_dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) {
    const double d = squared_distance(x, centroids.data() + j * dim);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  *best_dist = best_d;
  return best;
}

std::vector<double> kmeanspp_init(const VectorSet& points, int k, Rng& rng) {
  const std::size_t n = points.size();
  const int dim = points.dim;
  std::vector<double> centroids(static_cast<std::size_t>(k) * dim);
  std::vector<char> chosen(n, 0);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());

  std::size_t pick = rng.uniform_index(n);
  for (int c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) total += dist[i];
      if (total > 0) {
        double target = rng.uniform01() * total;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          target -= dist[i];
          if (target < 0 && dist[i] > 0) {
            pick = i;
            break;
          }
        }
        if (pick == n) {
          // Rounding pushed past the end: take the last point with mass.
          for (std::size_t i = n; i-- > 0;) {
            if (dist[i] > 0) {
              pick = i;
              break;
            }
          }
        }
      } else {
        // Every point coincides with a chosen centroid.
        std::vector<std::size_t> unchosen;
        for (std::size_t i = 0; i < n; ++i) {
          if (!chosen[i]) unchosen.push_back(i);
        }
        pick = unchosen.empty() ? rng.uniform_index(n)
                                : unchosen[rng.uniform_index(unchosen.size())];
      }
    }
    chosen[pick] = 1;
    auto row = points.row(pick);
    double* dst = centroids.data() + static_cast<std::size_t>(c) * dim;
    for (int d = 0; d < dim; ++d) dst[d] = row[d];
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], squared_distance(points.row(i), dst));
    }
  }
  return centroids;
}

}  // namespace

void VectorSet::append(std::span<const float> v) {
  if (dim == 0) dim = static_cast<int>(v.size());
  if (static_cast<int>(v.size()) != dim) {
    fail(ErrorKind::kDomain, "vector length does not match the set");
  }
  data.insert(data.end(), v.begin(), v.end());
}

std::span<const float> PQModel::centroid(int codebook, int index) const {
  const std::size_t off =
      (static_cast<std::size_t>(codebook) * codebook_size + index) *
      subvector_dim;
  return {centroids.data() + off, static_cast<std::size_t>(subvector_dim)};
}

void PQModel::validate() const {
  if (num_codebooks < 1 || subvector_dim < 1 || codebook_size < 1 ||
      codebook_size > 256) {
    fail(ErrorKind::kConfig, "pq model has invalid dimensions");
  }
  const std::size_t expected = static_cast<std::size_t>(num_codebooks) *
                               codebook_size * subvector_dim;
  if (centroids.size() != expected) {
    fail(ErrorKind::kCorruption, "pq model centroid count mismatch");
  }
  for (float v : centroids) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::kCorruption, "pq model has a non-finite centroid");
    }
  }
}

std::vector<std::uint8_t> PQModel::serialize() const {
  ByteWriter w;
  w.put_magic("RPQ1");
  w.put_u32(static_cast<std::uint32_t>(num_codebooks));
  w.put_u32(static_cast<std::uint32_t>(codebook_size));
  w.put_u32(static_cast<std::uint32_t>(subvector_dim));
  for (float v : centroids) w.put_f32(v);
  return w.take();
}

PQModel PQModel::deserialize(std::span<const std::uint8_t> bytes,
                             const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("RPQ1");
  PQModel m;
  m.num_codebooks = static_cast<int>(r.get_u32());
  m.codebook_size = static_cast<int>(r.get_u32());
  m.subvector_dim = static_cast<int>(r.get_u32());
  if (m.num_codebooks < 1 || m.subvector_dim < 1 || m.codebook_size < 1 ||
      m.codebook_size > 256) {
    r.error("invalid pq header");
  }
  const std::size_t count = static_cast<std::size_t>(m.num_codebooks) *
                            m.codebook_size * m.subvector_dim;
  if (r.remaining() != count * 4) {
    r.error("centroid payload length " + std::to_string(r.remaining()) +
            " does not match expected " + std::to_string(count * 4));
  }
  m.centroids.resize(count);
  for (auto& v : m.centroids) v = r.get_f32();
  r.expect_end();
  m.validate();
  return m;
}

std::uint64_t PQModel::fingerprint() const { return fnv1a64(serialize()); }

std::vector<float> kmeans(const VectorSet& points, int k, std::uint64_t seed,
                          int iters, KMeansTrace* trace) {
  const std::size_t n = points.size();
  const int dim = points.dim;
  if (n == 0 || k < 1 || static_cast<std::size_t>(k) > n) {
    fail(ErrorKind::kConfig, "k-means needs at least k points");
  }
  Rng rng(seed);
  std::vector<double> centroids = kmeanspp_init(points, k, rng);
  std::vector<int> assign(n, -1);
  std::vector<double> dist(n);
  std::vector<std::size_t> members(k);

  auto assign_all = [&]() {
    bool changed = false;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = nearest(points.row(i), centroids, k, dim, &dist[i]);
      if (a != assign[i]) changed = true;
      assign[i] = a;
      total += dist[i];
    }
    if (trace) trace->mse.push_back(total / (static_cast<double>(n) * dim));
    return changed;
  };

  bool changed = assign_all();
  for (int it = 0; it < iters && changed; ++it) {
    std::fill(members.begin(), members.end(), 0);
    for (std::size_t i = 0; i < n; ++i) ++members[assign[i]];
    for (int j = 0; j < k; ++j) {
      if (members[j] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (members[assign[i]] < 2) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      if (far == n) break;
      --members[assign[far]];
      assign[far] = j;
      members[j] = 1;
      dist[far] = 0;
    }
    std::vector<double> sums(static_cast<std::size_t>(k) * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = points.row(i);
      double* dst = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
      for (int d = 0; d < dim; ++d) dst[d] += row[d];
    }
    for (int j = 0; j < k; ++j) {
      if (members[j] == 0) continue;
      for (int d = 0; d < dim; ++d) {
        centroids[static_cast<std::size_t>(j) * dim + d] =
            sums[static_cast<std::size_t>(j) * dim + d] / members[j];
      }
    }
    changed = assign_all();
  }
  return {centroids.begin(), centroids.end()};
}

PQModel train_pq(const VectorSet& samples, int num_codebooks,
                 int codebook_size, std::uint64_t seed, int iters,
                 std::vector<KMeansTrace>* traces) {
  if (samples.size() == 0) fail(ErrorKind::kConfig, "no pq training samples");
  if (num_codebooks < 1 || samples.dim % num_codebooks != 0) {
    fail(ErrorKind::kConfig, "number of codebooks (" +
                                 std::to_string(num_codebooks) +
                                 ") must divide the feature dimension (" +
                                 std::to_string(samples.dim) + ")");
  }
  if (codebook_size < 1 || codebook_size > 256) {
    fail(ErrorKind::kConfig, "codebook size must lie in [1, 256]");
  }
  if (samples.size() < static_cast<std::size_t>(codebook_size)) {
    fail(ErrorKind::kConfig, "need at least " + std::to_string(codebook_size) +
                                 " samples, got " +
                                 std::to_string(samples.size()));
  }
  PQModel model;
  model.num_codebooks = num_codebooks;
  model.codebook_size = codebook_size;
  model.subvector_dim = samples.dim / num_codebooks;
  model.centroids.reserve(static_cast<std::size_t>(num_codebooks) *
                          codebook_size * model.subvector_dim);
  if (traces) traces->assign(num_codebooks, {});

  const int sub = model.subvector_dim;
  for (int c = 0; c < num_codebooks; ++c) {
    VectorSet slice;
    slice.dim = sub;
    slice.data.reserve(samples.size() * sub);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto row = samples.row(i).subspan(static_cast<std::size_t>(c) * sub, sub);
      slice.data.insert(slice.data.end(), row.begin(), row.end());
    }
    auto cents = kmeans(slice, codebook_size, mix_seed(seed, c), iters,
                        traces ? &(*traces)[c] : nullptr);
    model.centroids.insert(model.centroids.end(), cents.begin(), cents.end());
  }
  return model;
}

VectorSet subsample_locations(const FeatureMap& fmap, int k,
                              std::uint64_t seed) {
  const std::size_t cells = fmap.cell_count();
  if (k < 1 || static_cast<std::size_t>(k) > cells) {
    fail(ErrorKind::kDomain, "cannot sample " + std::to_string(k) +
                                 " locations from " + std::to_string(cells));
  }
  Rng rng(seed);
  VectorSet out;
  out.dim = fmap.channels;
  for (std::size_t idx : rng.sample_without_replacement(cells, k)) {
    out.append(fmap.cell(idx));
  }
  return out;
}

VectorSet all_locations(const FeatureMap& fmap) {
  VectorSet out;
  out.dim = fmap.channels;
  out.data = fmap.values;
  return out;
}

QuantizedFeatureMap encode(const PQModel& model, const FeatureMap& fmap) {
  if (fmap.channels != model.dim()) {
    fail(ErrorKind::kDomain, "feature map has " +
                                 std::to_string(fmap.channels) +
                                 " channels but the pq model expects " +
                                 std::to_string(model.dim()));
  }
  QuantizedFeatureMap q{fmap.image_id, fmap.grid_h, fmap.grid_w,
                        model.num_codebooks, {}};
  q.codes.reserve(fmap.cell_count() * model.num_codebooks);
  const auto sub = static_cast<std::size_t>(model.subvector_dim);
  for (std::size_t cell = 0; cell < fmap.cell_count(); ++cell) {
    auto x = fmap.cell(cell);
    for (int c = 0; c < model.num_codebooks; ++c) {
      auto part = x.subspan(c * sub, sub);
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < model.codebook_size; ++j) {
        const double d = squared_distance(part, model.centroid(c, j));
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      q.codes.push_back(static_cast<std::uint8_t>(best));
    }
  }
  return q;
}

FeatureMap decode(const PQModel& model, const QuantizedFeatureMap& q) {
  if (q.num_codebooks != model.num_codebooks ||
      q.codes.size() != static_cast<std::size_t>(q.grid_h) * q.grid_w *
                            q.num_codebooks) {
    fail(ErrorKind::kCorruption, "quantized map '" + q.image_id +
                                     "' does not match the pq model shape");
  }
  FeatureMap out(q.image_id, q.grid_h, q.grid_w, model.dim());
  std::size_t k = 0;
  float* dst = out.values.data();
  for (std::size_t cell = 0; cell < out.cell_count(); ++cell) {
    for (int c = 0; c < model.num_codebooks; ++c, ++k) {
      const int code = q.codes[k];
      if (code >= model.codebook_size) {
        fail(ErrorKind::kCorruption,
             "code " + std::to_string(code) + " in '" + q.image_id +
                 "' exceeds codebook size " +
                 std::to_string(model.codebook_size));
      }
      auto cen = model.centroid(c, code);
      dst = std::copy(cen.begin(), cen.end(), dst);
    }
  }
  return out;
}

double reconstruction_mse(const PQModel& model, const VectorSet& samples) {
  if (samples.dim != model.dim()) {
    fail(ErrorKind::kDomain, "sample dimension does not match pq model");
  }
  double total = 0;
  const auto sub = static_cast<std::size_t>(model.subvector_dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto x = samples.row(i);
    for (int c = 0; c < model.num_codebooks; ++c) {
      auto part = x.subspan(c * sub, sub);
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < model.codebook_size; ++j) {
        best = std::min(best, squared_distance(part, model.centroid(c, j)));
      }
      total += best;
    }
  }
  return total / (static_cast<double>(samples.size()) * samples.dim);
}

}  // namespace streamdet
