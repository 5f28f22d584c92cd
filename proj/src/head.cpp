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

#include "streamdet/head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "streamdet/binary_io.hpp"
#include "streamdet/error.hpp"
#include "streamdet/rng.hpp"

namespace streamdet {

namespace {

constexpr double kGridEps = 1e-9;

// Half-open cell range [lo, hi) covering [a, b) in grid units, never empty.
std::pair<int, int> cell_range(double a, double b, int extent) {
  int lo = static_cast<int>(std::floor(a + kGridEps));
  int hi = static_cast<int>(std::ceil(b - kGridEps));
  lo = std::clamp(lo, 0, extent - 1);
  hi = std::clamp(hi, lo + 1, extent);
  return {lo, hi};
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

void add_bias(Eigen::MatrixXd& m, const Eigen::MatrixXd& bias) {
  m.rowwise() += bias.row(0);
}

void fill_normal(Eigen::MatrixXd& m, double stddev, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = stddev * rng.normal();
  }
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace

Eigen::VectorXd roi_pool(const FeatureMap& fmap, const BoundingBox& box,
                         int image_w, int image_h, PoolBins bins) {
  if (!box.valid()) fail(ErrorKind::kDomain, "roi_pool on an empty box");
  if (image_w < 1 || image_h < 1 || bins.rows < 1 || bins.cols < 1) {
    fail(ErrorKind::kDomain, "roi_pool needs positive image size and bins");
  }
  const double sy = static_cast<double>(fmap.grid_h) / image_h;
  const double sx = static_cast<double>(fmap.grid_w) / image_w;
  const double gy1 = box.y1 * sy, gy2 = box.y2 * sy;
  const double gx1 = box.x1 * sx, gx2 = box.x2 * sx;
  const double bh = (gy2 - gy1) / bins.rows;
  const double bw = (gx2 - gx1) / bins.cols;
  const int d = fmap.channels;

  Eigen::VectorXd out(static_cast<Eigen::Index>(bins.rows) * bins.cols * d);
  for (int i = 0; i < bins.rows; ++i) {
    const auto [r0, r1] =
        cell_range(gy1 + i * bh, gy1 + (i + 1) * bh, fmap.grid_h);
    for (int j = 0; j < bins.cols; ++j) {
      const auto [c0, c1] =
          cell_range(gx1 + j * bw, gx1 + (j + 1) * bw, fmap.grid_w);
      auto dst = out.segment((static_cast<Eigen::Index>(i) * bins.cols + j) * d,
                             d);
      dst.setConstant(-std::numeric_limits<double>::infinity());
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
          auto cell = fmap.cell(r, c);
          for (int k = 0; k < d; ++k) {
            dst[k] = std::max(dst[k], static_cast<double>(cell[k]));
          }
        }
      }
    }
  }
  return out;
}

Eigen::MatrixXd pool_boxes(const FeatureMap& fmap,
                           std::span<const BoundingBox> boxes, int image_w,
                           int image_h, PoolBins bins) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(boxes.size()),
                      static_cast<Eigen::Index>(bins.rows) * bins.cols *
                          fmap.channels);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        roi_pool(fmap, boxes[i], image_w, image_h, bins).transpose();
  }
  return out;
}

int HeadParams::column_of(ClassId c) const {
  if (c == kBackground) return 0;
  auto it = std::find(classes.begin(), classes.end(), c);
  return it == classes.end() ? -1 : static_cast<int>(it - classes.begin()) + 1;
}

std::array<Eigen::MatrixXd*, HeadParams::kTensorCount> HeadParams::tensors() {
  return {&w1, &b1, &w2, &b2, &wc, &bc, &wr, &br};
}

std::array<const Eigen::MatrixXd*, HeadParams::kTensorCount>
HeadParams::tensors() const {
  return {&w1, &b1, &w2, &b2, &wc, &bc, &wr, &br};
}

const std::array<const char*, HeadParams::kTensorCount>&
HeadParams::tensor_names() {
  static const std::array<const char*, kTensorCount> names{
      "trunk1.weight", "trunk1.bias",     "trunk2.weight",    "trunk2.bias",
      "classifier.weight", "classifier.bias", "regressor.weight",
      "regressor.bias"};
  return names;
}

HeadParams HeadParams::zeros_like() const {
  HeadParams z = *this;
  for (auto* t : z.tensors()) t->setZero();
  return z;
}

std::vector<std::uint8_t> HeadParams::serialize() const {
  ByteWriter w;
  w.put_magic("RHD1");
  w.put_u32(static_cast<std::uint32_t>(classes.size()));
  for (ClassId c : classes) w.put_u32(static_cast<std::uint32_t>(c));
  w.put_u32(static_cast<std::uint32_t>(bins.rows));
  w.put_u32(static_cast<std::uint32_t>(bins.cols));
  w.put_u32(static_cast<std::uint32_t>(channels));
  for (const auto* t : tensors()) {
    w.put_u32(static_cast<std::uint32_t>(t->rows()));
    w.put_u32(static_cast<std::uint32_t>(t->cols()));
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index c = 0; c < t->cols(); ++c) {
        w.put_f32(static_cast<float>((*t)(r, c)));
      }
    }
  }
  return w.take();
}

HeadParams HeadParams::deserialize(std::span<const std::uint8_t> bytes,
                                   const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("RHD1");
  HeadParams p;
  const std::uint32_t n = r.get_u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    p.classes.push_back(static_cast<ClassId>(r.get_u32()));
  }
  p.bins.rows = static_cast<int>(r.get_u32());
  p.bins.cols = static_cast<int>(r.get_u32());
  p.channels = static_cast<int>(r.get_u32());
  for (auto* t : p.tensors()) {
    const std::uint32_t rows = r.get_u32();
    const std::uint32_t cols = r.get_u32();
    if (static_cast<std::uint64_t>(rows) * cols * 4 > r.remaining()) {
      r.error("tensor larger than the remaining payload");
    }
    t->resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) (*t)(i, j) = r.get_f32();
    }
  }
  r.expect_end();
  const auto h = p.w1.cols();
  const auto outs = static_cast<Eigen::Index>(n) + 1;
  if (p.w1.rows() != static_cast<Eigen::Index>(p.bins.rows) * p.bins.cols *
                         p.channels ||
      p.b1.rows() != 1 || p.b1.cols() != h || p.w2.rows() != h ||
      p.w2.cols() != h || p.b2.cols() != h || p.wc.rows() != h ||
      p.wc.cols() != outs || p.bc.cols() != outs || p.wr.rows() != h ||
      p.wr.cols() != 4 * outs || p.br.cols() != 4 * outs) {
    r.error("tensor shapes are inconsistent");
  }
  return p;
}

HeadParams init_head(int channels, PoolBins bins, int hidden,
                     std::span<const ClassId> classes, std::uint64_t seed) {
  if (channels < 1 || hidden < 1 || bins.rows < 1 || bins.cols < 1) {
    fail(ErrorKind::kConfig, "head dimensions must be positive");
  }
  HeadParams p;
  p.bins = bins;
  p.channels = channels;
  p.classes.assign(classes.begin(), classes.end());
  const int in = bins.rows * bins.cols * channels;
  const int outs = static_cast<int>(classes.size()) + 1;
  Rng rng(seed);
  p.w1.resize(in, hidden);
  fill_normal(p.w1, std::sqrt(2.0 / in), rng);
  p.b1 = Eigen::MatrixXd::Zero(1, hidden);
  p.w2.resize(hidden, hidden);
  fill_normal(p.w2, std::sqrt(2.0 / hidden), rng);
  p.b2 = Eigen::MatrixXd::Zero(1, hidden);
  p.wc.resize(hidden, outs);
  fill_normal(p.wc, 0.01, rng);
  p.bc = Eigen::MatrixXd::Zero(1, outs);
  p.wr = Eigen::MatrixXd::Zero(hidden, 4 * outs);
  p.br = Eigen::MatrixXd::Zero(1, 4 * outs);
  return p;
}

HeadOutput forward(const HeadParams& params, const Eigen::MatrixXd& pooled) {
  if (pooled.cols() != params.w1.rows()) {
    fail(ErrorKind::kDomain, "head input has width " +
                                 std::to_string(pooled.cols()) +
                                 ", expected " +
                                 std::to_string(params.w1.rows()));
  }
  Eigen::MatrixXd z1 = pooled * params.w1;
  add_bias(z1, params.b1);
  Eigen::MatrixXd z2 = relu(z1) * params.w2;
  add_bias(z2, params.b2);
  const Eigen::MatrixXd h2 = relu(z2);
  HeadOutput out{h2 * params.wc, h2 * params.wr};
  add_bias(out.scores, params.bc);
  add_bias(out.deltas, params.br);
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

LossAndGrads loss_and_grads(const HeadParams& params,
                            const Eigen::MatrixXd& pooled,
                            std::span<const RoiTarget> targets) {
  const auto batch = static_cast<Eigen::Index>(targets.size());
  if (batch == 0) fail(ErrorKind::kDomain, "loss over an empty batch");
  if (pooled.rows() != batch) {
    fail(ErrorKind::kDomain, "pooled rows do not match the target count");
  }
  if (pooled.cols() != params.w1.rows()) {
    fail(ErrorKind::kDomain, "head input width mismatch");
  }
  std::vector<int> column(targets.size());
  Eigen::Index fg = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    column[i] = params.column_of(targets[i].class_id);
    if (column[i] < 0) {
      fail(ErrorKind::kDomain, "target class " +
                                   std::to_string(targets[i].class_id) +
                                   " has no output unit");
    }
    if (column[i] > 0) ++fg;
  }

  Eigen::MatrixXd z1 = pooled * params.w1;
  add_bias(z1, params.b1);
  const Eigen::MatrixXd h1 = relu(z1);
  Eigen::MatrixXd z2 = h1 * params.w2;
  add_bias(z2, params.b2);
  const Eigen::MatrixXd h2 = relu(z2);
  Eigen::MatrixXd scores = h2 * params.wc;
  add_bias(scores, params.bc);
  Eigen::MatrixXd deltas = h2 * params.wr;
  add_bias(deltas, params.br);

  LossAndGrads out;
  out.grads = params.zeros_like();
  Eigen::MatrixXd d_scores = softmax_rows(scores);
  Eigen::MatrixXd d_deltas = Eigen::MatrixXd::Zero(deltas.rows(), deltas.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = column[i];
    const double m = scores.row(i).maxCoeff();
    const double lse = m + std::log((scores.row(i).array() - m).exp().sum());
    out.classification_loss += lse - scores(i, y);
    d_scores(i, y) -= 1.0;
    if (y > 0) {
      for (int k = 0; k < 4; ++k) {
        const double r = deltas(i, 4 * y + k) - targets[i].deltas[k];
        out.regression_loss += smooth_l1(r);
        d_deltas(i, 4 * y + k) = smooth_l1_grad(r) / static_cast<double>(fg);
      }
    }
  }
  out.classification_loss /= static_cast<double>(batch);
  if (fg > 0) out.regression_loss /= static_cast<double>(fg);
  out.loss = out.classification_loss + out.regression_loss;
  d_scores /= static_cast<double>(batch);

  HeadParams& g = out.grads;
  g.wc = h2.transpose() * d_scores;
  g.bc = d_scores.colwise().sum();
  g.wr = h2.transpose() * d_deltas;
  g.br = d_deltas.colwise().sum();
  Eigen::MatrixXd d_z2 = d_scores * params.wc.transpose() +
                         d_deltas * params.wr.transpose();
  d_z2.array() *= (z2.array() > 0).cast<double>();
  g.w2 = h1.transpose() * d_z2;
  g.b2 = d_z2.colwise().sum();
  Eigen::MatrixXd d_z1 = d_z2 * params.w2.transpose();
  d_z1.array() *= (z1.array() > 0).cast<double>();
  g.w1 = pooled.transpose() * d_z1;
  g.b1 = d_z1.colwise().sum();
  return out;
}

SgdState SgdState::for_params(const HeadParams& params, double lr,
                              double momentum, double weight_decay) {
  return {lr, momentum, weight_decay, params.zeros_like()};
}

void sgd_step(HeadParams& params, SgdState& sgd, const HeadParams& grads) {
  auto p = params.tensors();
  auto v = sgd.velocity.tensors();
  auto g = grads.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i]->rows() != p[i]->rows() || g[i]->cols() != p[i]->cols() ||
        v[i]->rows() != p[i]->rows() || v[i]->cols() != p[i]->cols()) {
      fail(ErrorKind::kDomain, std::string("shape mismatch in ") +
                                   HeadParams::tensor_names()[i]);
    }
    if (!g[i]->allFinite()) {
      fail(ErrorKind::kNumeric, std::string("non-finite gradient in ") +
                                    HeadParams::tensor_names()[i]);
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    *v[i] = sgd.momentum * *v[i] + *g[i] + sgd.weight_decay * *p[i];
    *p[i] -= sgd.learning_rate * *v[i];
  }
}

void add_class(HeadParams& params, SgdState& sgd, ClassId c,
               std::uint64_t seed) {
  if (c < 1 || params.column_of(c) >= 0) {
    fail(ErrorKind::kSchedule,
         "class " + std::to_string(c) + " cannot be added to the head");
  }
  Rng rng(seed);
  const Eigen::Index h = params.wc.rows();
  const Eigen::Index outs = params.wc.cols();
  for (HeadParams* t : {&params, &sgd.velocity}) {
    const bool is_velocity = t == &sgd.velocity;
    t->wc.conservativeResize(h, outs + 1);
    t->bc.conservativeResize(1, outs + 1);
    t->wr.conservativeResize(h, 4 * (outs + 1));
    t->br.conservativeResize(1, 4 * (outs + 1));
    for (Eigen::Index r = 0; r < h; ++r) {
      t->wc(r, outs) = is_velocity ? 0.0 : 0.01 * rng.normal();
    }
    t->bc(0, outs) = 0;
    t->wr.rightCols(4).setZero();
    t->br.rightCols(4).setZero();
    t->classes.push_back(c);
  }
}

std::vector<Detection> head_detect(const HeadParams& params,
                                   const FeatureMap& fmap,
                                   const ProposalSet& proposals, int image_w,
                                   int image_h, double min_score) {
  std::vector<Detection> out;
  if (proposals.boxes.empty()) return out;
  const Eigen::MatrixXd pooled =
      pool_boxes(fmap, proposals.boxes, image_w, image_h, params.bins);
  const HeadOutput raw = forward(params, pooled);
  const Eigen::MatrixXd probs = softmax_rows(raw.scores);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (std::size_t k = 0; k < params.classes.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(k) + 1;
      const double score = probs(i, col);
      if (score < min_score) continue;
      BoxDeltas d{};
      for (int j = 0; j < 4; ++j) d[j] = raw.deltas(i, 4 * col + j);
      d[2] = std::clamp(d[2], -kMaxLogScale, kMaxLogScale);
      d[3] = std::clamp(d[3], -kMaxLogScale, kMaxLogScale);
      try {
        const BoundingBox box = clip_box(
            decode_deltas(proposals.boxes[static_cast<std::size_t>(i)], d),
            image_w, image_h);
        out.push_back({proposals.image_id, box, params.classes[k], score});
      } catch (const Error&) {
        // decoded box fell outside the image
      }
    }
  }
  return out;
}

}  // namespace streamdet
