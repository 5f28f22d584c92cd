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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "streamdet/core.hpp"
#include "streamdet/targets.hpp"

namespace streamdet {

struct PoolBins {
  int rows = 2;
  int cols = 2;
};

/// Max-pools the grid cells under `box` into rows x cols bins. The box is
/// mapped to grid units by grid_h / image_h and grid_w / image_w; every bin
/// covers at least one cell. Output order is (bin row, bin col, channel).
Eigen::VectorXd roi_pool(const FeatureMap& fmap, const BoundingBox& box,
                         int image_w, int image_h, PoolBins bins);

/// Trainable detector head: dense-ReLU-dense-ReLU trunk, then an affine
/// classifier over (background + classes) and a class-aware box regressor.
/// Biases are 1 x n matrices so every tensor shares one type.
struct HeadParams {
  PoolBins bins;
  int channels = 0;
  /// classes[k] owns classifier column k + 1; column 0 is background.
  std::vector<ClassId> classes;

  Eigen::MatrixXd w1, b1;  // input x hidden
  Eigen::MatrixXd w2, b2;  // hidden x hidden
  Eigen::MatrixXd wc, bc;  // hidden x (C + 1)
  Eigen::MatrixXd wr, br;  // hidden x 4(C + 1)

  static constexpr std::size_t kTensorCount = 8;

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int hidden() const { return static_cast<int>(w1.cols()); }
  int num_outputs() const { return static_cast<int>(wc.cols()); }
  /// Classifier column owned by `c`; 0 for background, -1 if unknown.
  int column_of(ClassId c) const;

  std::array<Eigen::MatrixXd*, kTensorCount> tensors();
  std::array<const Eigen::MatrixXd*, kTensorCount> tensors() const;
  static const std::array<const char*, kTensorCount>& tensor_names();

  /// Same shapes, all zeros.
  HeadParams zeros_like() const;

  /// "RHD1" container of shape-tagged float32 tensors plus the class list.
  std::vector<std::uint8_t> serialize() const;
  static HeadParams deserialize(std::span<const std::uint8_t> bytes,
                                const std::string& context = "head");
};

/// He-normal trunk, N(0, 0.01^2) classifier, zero regressor and biases.
HeadParams init_head(int channels, PoolBins bins, int hidden,
                     std::span<const ClassId> classes, std::uint64_t seed);

struct HeadOutput {
  Eigen::MatrixXd scores;  // batch x (C + 1) logits
  Eigen::MatrixXd deltas;  // batch x 4(C + 1)
};

/// Rows of `pooled` are inputs. Throws kDomain on a width mismatch.
HeadOutput forward(const HeadParams& params, const Eigen::MatrixXd& pooled);

/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

struct LossAndGrads {
  double loss = 0;
  double classification_loss = 0;
  double regression_loss = 0;
  HeadParams grads;  // shapes only; classes/bins copied from params
};

/// Mean cross-entropy over all rows plus smooth-L1 (beta 1) on the target
/// class's deltas, averaged over foreground rows.
LossAndGrads loss_and_grads(const HeadParams& params,
                            const Eigen::MatrixXd& pooled,
                            std::span<const RoiTarget> targets);

struct SgdState {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  HeadParams velocity;

  static SgdState for_params(const HeadParams& params, double lr,
                             double momentum, double weight_decay);
};

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
/// Rejects non-finite gradients with kNumeric and leaves state untouched.
void sgd_step(HeadParams& params, SgdState& sgd, const HeadParams& grads);

/// Grows classifier by one column and regressor by four. New classifier
/// weights ~ N(0, 0.01^2), new regressor weights zero, new velocity zero.
void add_class(HeadParams& params, SgdState& sgd, ClassId c,
               std::uint64_t seed);

/// Per-proposal, per-class candidate detections before suppression.
/// Deltas are clamped to the decodable range; boxes are clipped to the image
/// and dropped if empty. Scores below `min_score` are skipped.
std::vector<Detection> head_detect(const HeadParams& params,
                                   const FeatureMap& fmap,
                                   const ProposalSet& proposals, int image_w,
                                   int image_h, double min_score);

/// Pools every box into one row.
Eigen::MatrixXd pool_boxes(const FeatureMap& fmap,
                           std::span<const BoundingBox> boxes, int image_w,
                           int image_h, PoolBins bins);

}  // namespace streamdet
