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
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "streamdet/binary_io.hpp"
#include "streamdet/core.hpp"
#include "streamdet/targets.hpp"

namespace streamdet {

/// Which mean a sample updates: the class mean, or that class's background
/// mean.
struct SldaLabel {
  ClassId class_id = 1;
  bool background = false;
};

struct RunningMean {
  Eigen::VectorXd mean;
  std::uint64_t count = 0;
};

struct SldaPrediction {
  std::vector<std::pair<ClassId, double>> class_scores;  // fitted classes
  double background_score = 0;  // max over fitted background means
  bool has_background = false;
  ClassId label = kBackground;  // argmax; kBackground if background wins
};

/// Precomputed linear discriminants: g(x) = x . (L mu) - mu . (L mu) / 2 with
/// L = [(1 - eps) Sigma + eps I]^-1. Immutable; safe to share across threads.
class SldaSnapshot {
 public:
  SldaPrediction predict(const Eigen::VectorXd& x) const;

 private:
  friend class SldaModel;
  std::vector<ClassId> fg_ids_;
  Eigen::MatrixXd fg_weights_;  // dim x n_fg
  Eigen::VectorXd fg_bias_;
  Eigen::MatrixXd bg_weights_;
  Eigen::VectorXd bg_bias_;
};

/// Streaming Gaussian classifier with a foreground and a background mean per
/// class and one shared covariance.
class SldaModel {
 public:
  explicit SldaModel(int dim, double shrinkage = 1e-2);

  /// `x` must be unit length (within 1e-6). Updates the labelled running
  /// mean; when `update_cov` is set and the covariance is not frozen, also
  /// the shared within-class covariance.
  void fit(const Eigen::VectorXd& x, SldaLabel label, bool update_cov = true);

  SldaPrediction predict(const Eigen::VectorXd& x) const;
  /// Cached until the next fit.
  std::shared_ptr<const SldaSnapshot> snapshot() const;

  void freeze_covariance() { cov_frozen_ = true; }
  void unfreeze_covariance() { cov_frozen_ = false; }
  bool cov_frozen() const { return cov_frozen_; }

  int dim() const { return dim_; }
  double shrinkage() const { return shrinkage_; }
  const std::map<ClassId, RunningMean>& class_means() const { return fg_; }
  const std::map<ClassId, RunningMean>& background_means() const { return bg_; }
  const Eigen::MatrixXd& shared_cov() const { return cov_; }
  std::uint64_t cov_count() const { return cov_count_; }

  void write(ByteWriter& w) const;
  static SldaModel read(ByteReader& r);

 private:
  int dim_;
  double shrinkage_;
  bool cov_frozen_ = false;
  std::map<ClassId, RunningMean> fg_;
  std::map<ClassId, RunningMean> bg_;
  Eigen::MatrixXd cov_;
  std::uint64_t cov_count_ = 0;
  mutable std::shared_ptr<const SldaSnapshot> cache_;
};

/// Closed-form streaming linear regressor from x (dim d) to y (dim m).
class StreamRegressModel {
 public:
  StreamRegressModel(int dim, int targets, double shrinkage = 1e-4);

  /// N += 1; dx = x - mu_x; dy = y - mu_y; Sigma_x and Sigma_xy move toward
  /// (N-1)/N * outer products by 1/N; then mu_x and mu_y move by dx/N, dy/N.
  void update(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

  /// r = x A + b with A = L Sigma_xy, b = mu_y - mu_x A and
  /// L = [(1 - eps) Sigma_x + eps I]^-1. Throws kModelEmpty before any update.
  Eigen::VectorXd predict(const Eigen::VectorXd& x) const;

  /// Appends zero-valued target coordinates.
  void grow_targets(int extra);

  int dim() const { return static_cast<int>(mu_x_.size()); }
  int targets() const { return static_cast<int>(mu_y_.size()); }
  std::uint64_t count() const { return n_; }
  const Eigen::VectorXd& mu_x() const { return mu_x_; }
  const Eigen::VectorXd& mu_y() const { return mu_y_; }
  const Eigen::MatrixXd& sigma_x() const { return sigma_x_; }
  const Eigen::MatrixXd& sigma_xy() const { return sigma_xy_; }
  double shrinkage() const { return shrinkage_; }

  void write(ByteWriter& w) const;
  static StreamRegressModel read(ByteReader& r);

 private:
  struct Solved {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
  };

  double shrinkage_;
  std::uint64_t n_ = 0;
  Eigen::VectorXd mu_x_, mu_y_;
  Eigen::MatrixXd sigma_x_, sigma_xy_;
  mutable std::shared_ptr<const Solved> cache_;
};

/// Scales to unit length. Throws kDomain on a zero vector.
Eigen::VectorXd l2_normalize(const Eigen::VectorXd& x);

/// The SLDA + streaming regression detector: a classifier over pooled box
/// features plus a class-block regressor for box deltas.
class SldaRegressDetector {
 public:
  SldaRegressDetector(int feature_dim, double slda_shrinkage = 1e-2,
                      double regress_shrinkage = 1e-4);

  /// Registers an output block for a new class. Throws kSchedule if known.
  void add_class(ClassId c);
  const std::vector<ClassId>& classes() const { return classes_; }

  /// One image's update: with the covariance frozen, background proposals
  /// update the background mean of their best-overlapping visible class
  /// (the first gt box's class when nothing overlaps) and every proposal
  /// updates the regressor; then, unfrozen, each ground-truth box feature
  /// updates its class mean and the covariance. Rows of `proposal_features`
  /// align with `targets`, rows of `gt_features` with `gt.boxes`.
  void fit_image(const Eigen::MatrixXd& proposal_features,
                 std::span<const RoiTarget> targets, const ImageAnnotation& gt,
                 const Eigen::MatrixXd& gt_features);

  /// One detection per non-background proposal: argmax class, its decoded
  /// delta block, softmax-normalized discriminant score.
  std::vector<Detection> detect(const Eigen::MatrixXd& proposal_features,
                                const ProposalSet& proposals, int image_w,
                                int image_h) const;

  /// One-hot-by-class regression target: the class's 4-block holds the
  /// deltas, every other coordinate (and all of a background row) is zero.
  Eigen::VectorXd regression_target(const RoiTarget& t) const;

  const SldaModel& slda() const { return slda_; }
  SldaModel& slda() { return slda_; }
  const StreamRegressModel& regressor() const { return regress_; }

  std::vector<std::uint8_t> serialize() const;
  static SldaRegressDetector deserialize(std::span<const std::uint8_t> bytes,
                                         const std::string& context = "slda");

 private:
  int block_of(ClassId c) const;

  std::vector<ClassId> classes_;
  SldaModel slda_;
  StreamRegressModel regress_;
};

}  // namespace streamdet
