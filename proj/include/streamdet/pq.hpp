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
#include <span>
#include <string>
#include <vector>

#include "streamdet/core.hpp"

namespace streamdet {

/// Row-major set of equal-length float vectors.
struct VectorSet {
  int dim = 0;
  std::vector<float> data;

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, static_cast<std::size_t>(dim)};
  }
  void append(std::span<const float> v);
};

/// Product quantizer: `num_codebooks` codebooks, one per contiguous channel
/// slice of width `subvector_dim`, each with `codebook_size` centroids.
struct PQModel {
  int num_codebooks = 0;
  int codebook_size = 0;
  int subvector_dim = 0;
  /// (codebook, centroid, dim) order.
  std::vector<float> centroids;

  int dim() const { return num_codebooks * subvector_dim; }
  std::span<const float> centroid(int codebook, int index) const;
  void validate() const;

  /// "RPQ1" + u32 (s, codebook_size, subvector_dim) + f32 centroids.
  std::vector<std::uint8_t> serialize() const;
  static PQModel deserialize(std::span<const std::uint8_t> bytes,
                             const std::string& context = "pq model");
  /// Hash of the serialized form; buffer checkpoints record it.
  std::uint64_t fingerprint() const;

  bool operator==(const PQModel&) const = default;
};

/// Byte codes for one feature map, (row, col, codebook) order.
struct QuantizedFeatureMap {
  ImageId image_id;
  int grid_h = 0;
  int grid_w = 0;
  int num_codebooks = 0;
  std::vector<std::uint8_t> codes;

  std::size_t byte_count() const { return codes.size(); }
  bool operator==(const QuantizedFeatureMap&) const = default;
};

/// Per-iteration mean squared error of one k-means run. Entry 0 is the error
/// of the seeded initialization; entry i the error after Lloyd iteration i.
struct KMeansTrace {
  std::vector<double> mse;
};

/// k-means++ seeding followed by at most `iters` Lloyd iterations. Returns
/// k * dim centroids. Empty clusters take the point farthest from its centroid.
std::vector<float> kmeans(const VectorSet& points, int k, std::uint64_t seed,
                          int iters, KMeansTrace* trace = nullptr);

/// Fits one codebook per subspace. Throws kConfig when `num_codebooks` does
/// not divide the sample dimension or samples are fewer than codebook_size.
PQModel train_pq(const VectorSet& samples, int num_codebooks,
                 int codebook_size, std::uint64_t seed, int iters = 25,
                 std::vector<KMeansTrace>* traces = nullptr);

/// k distinct grid locations, uniformly without replacement.
VectorSet subsample_locations(const FeatureMap& fmap, int k,
                              std::uint64_t seed);

/// Every cell of the map as one vector.
VectorSet all_locations(const FeatureMap& fmap);

QuantizedFeatureMap encode(const PQModel& model, const FeatureMap& fmap);
FeatureMap decode(const PQModel& model, const QuantizedFeatureMap& q);

/// Mean squared per-value reconstruction error of `samples` under `model`.
double reconstruction_mse(const PQModel& model, const VectorSet& samples);

}  // namespace streamdet
