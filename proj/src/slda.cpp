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

#include "streamdet/slda.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "streamdet/error.hpp"

namespace streamdet {

namespace {

Eigen::LLT<Eigen::MatrixXd> shrunk_cholesky(const Eigen::MatrixXd& cov,
                                            double eps) {
  Eigen::MatrixXd m = (1.0 - eps) * cov;
  m.diagonal().array() += eps;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::kNumeric, "shrunk covariance is not positive definite");
  }
  return llt;
}

void write_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
  w.put_u32(static_cast<std::uint32_t>(m.rows()));
  w.put_u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) w.put_f64(m(r, c));
  }
}

Eigen::MatrixXd read_matrix(ByteReader& r) {
  const std::uint32_t rows = r.get_u32();
  const std::uint32_t cols = r.get_u32();
  if (static_cast<std::uint64_t>(rows) * cols * 8 > r.remaining()) {
    r.error("matrix larger than the remaining payload");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, c) = r.get_f64();
  }
  return m;
}

void write_means(ByteWriter& w, const std::map<ClassId, RunningMean>& means) {
  w.put_u32(static_cast<std::uint32_t>(means.size()));
  for (const auto& [c, m] : means) {
    w.put_u32(static_cast<std::uint32_t>(c));
    w.put_u64(m.count);
    write_matrix(w, m.mean);
  }
}

std::map<ClassId, RunningMean> read_means(ByteReader& r, int dim) {
  std::map<ClassId, RunningMean> out;
  const std::uint32_t n = r.get_u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto c = static_cast<ClassId>(r.get_u32());
    RunningMean m;
    m.count = r.get_u64();
    Eigen::MatrixXd v = read_matrix(r);
    if (v.rows() != dim || v.cols() != 1) r.error("mean has the wrong shape");
    m.mean = v.col(0);
    out.emplace(c, std::move(m));
  }
  return out;
}

}  // namespace

Eigen::VectorXd l2_normalize(const Eigen::VectorXd& x) {
  const double n = x.norm();
  if (!(n > 0) || !std::isfinite(n)) {
    fail(ErrorKind::kDomain, "cannot normalize a zero or non-finite vector");
  }
  return x / n;
}

// ------------------------------------------------------------------- SLDA

SldaPrediction SldaSnapshot::predict(const Eigen::VectorXd& x) const {
  if (fg_ids_.empty()) fail(ErrorKind::kModelEmpty, "no fitted class means");
  SldaPrediction p;
  const Eigen::VectorXd fg = fg_weights_.transpose() * x + fg_bias_;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < fg_ids_.size(); ++k) {
    const double s = fg[static_cast<Eigen::Index>(k)];
    p.class_scores.emplace_back(fg_ids_[k], s);
    if (s > best) {
      best = s;
      p.label = fg_ids_[k];
    }
  }
  if (bg_weights_.cols() > 0) {
    const Eigen::VectorXd bg = bg_weights_.transpose() * x + bg_bias_;
    p.has_background = true;
    p.background_score = bg.maxCoeff();
    if (p.background_score > best) p.label = kBackground;
  }
  return p;
}

SldaModel::SldaModel(int dim, double shrinkage)
    : dim_(dim),
      shrinkage_(shrinkage),
      cov_(Eigen::MatrixXd::Zero(dim, dim)) {
  if (dim < 1) fail(ErrorKind::kConfig, "slda dimension must be positive");
  if (!(shrinkage > 0 && shrinkage <= 1)) {
    fail(ErrorKind::kConfig, "slda shrinkage must lie in (0, 1]");
  }
}

void SldaModel::fit(const Eigen::VectorXd& x, SldaLabel label,
                    bool update_cov) {
  if (x.size() != dim_) {
    fail(ErrorKind::kDomain, "slda input has dimension " +
                                 std::to_string(x.size()) + ", expected " +
                                 std::to_string(dim_));
  }
  if (!x.allFinite() || std::abs(x.norm() - 1.0) > 1e-6) {
    fail(ErrorKind::kPrecondition, "slda input must be L2-normalized");
  }
  auto& slot = (label.background ? bg_ : fg_)[label.class_id];
  if (slot.count == 0) slot.mean = Eigen::VectorXd::Zero(dim_);
  const Eigen::VectorXd dx = x - slot.mean;
  const double n = static_cast<double>(slot.count);
  if (update_cov && !cov_frozen_) {
    // Within-class scatter over all covariance-updating samples, divided by
    // their count; exact for any interleaving of classes.
    const double k = static_cast<double>(++cov_count_);
    cov_ += ((n / (n + 1.0)) * (dx * dx.transpose()) - cov_) / k;
  }
  slot.mean += dx / (n + 1.0);
  ++slot.count;
  cache_.reset();
}

std::shared_ptr<const SldaSnapshot> SldaModel::snapshot() const {
  if (cache_) return cache_;
  auto snap = std::make_shared<SldaSnapshot>();
  const auto llt = shrunk_cholesky(cov_, shrinkage_);
  auto build = [&](const std::map<ClassId, RunningMean>& means,
                   std::vector<ClassId>* ids, Eigen::MatrixXd& weights,
                   Eigen::VectorXd& bias) {
    Eigen::MatrixXd mu(dim_, 0);
    std::vector<ClassId> fitted;
    for (const auto& [c, m] : means) {
      if (m.count == 0) continue;
      fitted.push_back(c);
      mu.conservativeResize(Eigen::NoChange, mu.cols() + 1);
      mu.col(mu.cols() - 1) = m.mean;
    }
    weights = llt.solve(mu);
    bias.resize(mu.cols());
    for (Eigen::Index k = 0; k < mu.cols(); ++k) {
      bias[k] = -0.5 * mu.col(k).dot(weights.col(k));
    }
    if (ids) *ids = std::move(fitted);
  };
  build(fg_, &snap->fg_ids_, snap->fg_weights_, snap->fg_bias_);
  build(bg_, nullptr, snap->bg_weights_, snap->bg_bias_);
  cache_ = std::move(snap);
  return cache_;
}

SldaPrediction SldaModel::predict(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) fail(ErrorKind::kDomain, "slda input dimension");
  return snapshot()->predict(x);
}

void SldaModel::write(ByteWriter& w) const {
  w.put_u32(static_cast<std::uint32_t>(dim_));
  w.put_f64(shrinkage_);
  w.put_u8(cov_frozen_ ? 1 : 0);
  w.put_u64(cov_count_);
  write_matrix(w, cov_);
  write_means(w, fg_);
  write_means(w, bg_);
}

SldaModel SldaModel::read(ByteReader& r) {
  const int dim = static_cast<int>(r.get_u32());
  const double eps = r.get_f64();
  SldaModel m(dim, eps);
  m.cov_frozen_ = r.get_u8() != 0;
  m.cov_count_ = r.get_u64();
  m.cov_ = read_matrix(r);
  if (m.cov_.rows() != dim || m.cov_.cols() != dim) {
    r.error("covariance has the wrong shape");
  }
  m.fg_ = read_means(r, dim);
  m.bg_ = read_means(r, dim);
  return m;
}

// --------------------------------------------------------- stream regress

StreamRegressModel::StreamRegressModel(int dim, int targets, double shrinkage)
    : shrinkage_(shrinkage),
      mu_x_(Eigen::VectorXd::Zero(dim)),
      mu_y_(Eigen::VectorXd::Zero(targets)),
      sigma_x_(Eigen::MatrixXd::Zero(dim, dim)),
      sigma_xy_(Eigen::MatrixXd::Zero(dim, targets)) {
  if (dim < 1 || targets < 0) {
    fail(ErrorKind::kConfig, "regressor dimensions must be positive");
  }
  if (!(shrinkage > 0 && shrinkage <= 1)) {
    fail(ErrorKind::kConfig, "regressor shrinkage must lie in (0, 1]");
  }
}

void StreamRegressModel::update(const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y) {
  if (x.size() != mu_x_.size() || y.size() != mu_y_.size()) {
    fail(ErrorKind::kDomain, "regressor update has the wrong dimensions");
  }
  n_ += 1;
  const double n = static_cast<double>(n_);
  const Eigen::VectorXd dx = x - mu_x_;
  const Eigen::VectorXd dy = y - mu_y_;
  sigma_x_ += (((n - 1.0) / n) * (dx * dx.transpose()) - sigma_x_) / n;
  sigma_xy_ += (((n - 1.0) / n) * (dx * dy.transpose()) - sigma_xy_) / n;
  mu_x_ += dx / n;
  mu_y_ += dy / n;
  cache_.reset();
}

Eigen::VectorXd StreamRegressModel::predict(const Eigen::VectorXd& x) const {
  if (n_ == 0) fail(ErrorKind::kModelEmpty, "regressor has no updates");
  if (x.size() != mu_x_.size()) {
    fail(ErrorKind::kDomain, "regressor input has the wrong dimension");
  }
  if (!cache_) {
    auto s = std::make_shared<Solved>();
    s->a = shrunk_cholesky(sigma_x_, shrinkage_).solve(sigma_xy_);
    s->b = mu_y_ - s->a.transpose() * mu_x_;
    cache_ = std::move(s);
  }
  return cache_->a.transpose() * x + cache_->b;
}

void StreamRegressModel::grow_targets(int extra) {
  if (extra <= 0) return;
  const auto m = mu_y_.size();
  mu_y_.conservativeResize(m + extra);
  mu_y_.tail(extra).setZero();
  sigma_xy_.conservativeResize(Eigen::NoChange, m + extra);
  sigma_xy_.rightCols(extra).setZero();
  cache_.reset();
}

void StreamRegressModel::write(ByteWriter& w) const {
  w.put_f64(shrinkage_);
  w.put_u64(n_);
  write_matrix(w, mu_x_);
  write_matrix(w, mu_y_);
  write_matrix(w, sigma_x_);
  write_matrix(w, sigma_xy_);
}

StreamRegressModel StreamRegressModel::read(ByteReader& r) {
  const double eps = r.get_f64();
  const std::uint64_t n = r.get_u64();
  Eigen::MatrixXd mx = read_matrix(r), my = read_matrix(r);
  Eigen::MatrixXd sx = read_matrix(r), sxy = read_matrix(r);
  if (mx.cols() != 1 || my.cols() != 1 || sx.rows() != mx.rows() ||
      sx.cols() != mx.rows() || sxy.rows() != mx.rows() ||
      sxy.cols() != my.rows()) {
    r.error("regressor matrices have inconsistent shapes");
  }
  StreamRegressModel m(static_cast<int>(mx.rows()),
                       static_cast<int>(my.rows()), eps);
  m.n_ = n;
  m.mu_x_ = mx.col(0);
  m.mu_y_ = my.col(0);
  m.sigma_x_ = std::move(sx);
  m.sigma_xy_ = std::move(sxy);
  return m;
}

// ---------------------------------------------------------------- detector

SldaRegressDetector::SldaRegressDetector(int feature_dim,
                                         double slda_shrinkage,
                                         double regress_shrinkage)
    : slda_(feature_dim, slda_shrinkage),
      regress_(feature_dim, 4, regress_shrinkage) {}

void SldaRegressDetector::add_class(ClassId c) {
  if (c < 1 || block_of(c) >= 0) {
    fail(ErrorKind::kSchedule,
         "class " + std::to_string(c) + " cannot be added to the detector");
  }
  classes_.push_back(c);
  regress_.grow_targets(4);
}

int SldaRegressDetector::block_of(ClassId c) const {
  if (c == kBackground) return 0;
  auto it = std::find(classes_.begin(), classes_.end(), c);
  return it == classes_.end() ? -1
                              : static_cast<int>(it - classes_.begin()) + 1;
}

Eigen::VectorXd SldaRegressDetector::regression_target(
    const RoiTarget& t) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(regress_.targets());
  if (!t.foreground()) return y;
  const int b = block_of(t.class_id);
  if (b < 0) {
    fail(ErrorKind::kDomain,
         "class " + std::to_string(t.class_id) + " has no regression block");
  }
  for (int k = 0; k < 4; ++k) y[4 * b + k] = t.deltas[k];
  return y;
}

void SldaRegressDetector::fit_image(const Eigen::MatrixXd& proposal_features,
                                    std::span<const RoiTarget> targets,
                                    const ImageAnnotation& gt,
                                    const Eigen::MatrixXd& gt_features) {
  if (proposal_features.rows() != static_cast<Eigen::Index>(targets.size()) ||
      gt_features.rows() != static_cast<Eigen::Index>(gt.boxes.size())) {
    fail(ErrorKind::kDomain, "feature rows do not match labels");
  }
  if (gt.boxes.empty()) {
    fail(ErrorKind::kPrecondition, "image '" + gt.image_id +
                                       "' has no visible ground truth");
  }
  slda_.freeze_covariance();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Eigen::VectorXd x = l2_normalize(
        proposal_features.row(static_cast<Eigen::Index>(i)).transpose());
    const RoiTarget& t = targets[i];
    if (!t.foreground()) {
      const ClassId owner = t.matched_gt ? gt.boxes[*t.matched_gt].class_id
                                         : gt.boxes.front().class_id;
      slda_.fit(x, {owner, true}, false);
    }
    regress_.update(x, regression_target(t));
  }
  slda_.unfreeze_covariance();
  for (std::size_t i = 0; i < gt.boxes.size(); ++i) {
    const Eigen::VectorXd x = l2_normalize(
        gt_features.row(static_cast<Eigen::Index>(i)).transpose());
    slda_.fit(x, {gt.boxes[i].class_id, false}, true);
  }
}

std::vector<Detection> SldaRegressDetector::detect(
    const Eigen::MatrixXd& proposal_features, const ProposalSet& proposals,
    int image_w, int image_h) const {
  std::vector<Detection> out;
  if (slda_.class_means().empty()) return out;
  const auto snap = slda_.snapshot();
  for (std::size_t i = 0; i < proposals.boxes.size(); ++i) {
    const Eigen::VectorXd x = l2_normalize(
        proposal_features.row(static_cast<Eigen::Index>(i)).transpose());
    const SldaPrediction p = snap->predict(x);
    if (p.label == kBackground) continue;
    double top = p.has_background ? p.background_score
                                  : -std::numeric_limits<double>::infinity();
    double chosen = 0;
    for (const auto& [c, s] : p.class_scores) {
      top = std::max(top, s);
      if (c == p.label) chosen = s;
    }
    double denom = p.has_background ? std::exp(p.background_score - top) : 0.0;
    for (const auto& [c, s] : p.class_scores) denom += std::exp(s - top);
    const double score = std::exp(chosen - top) / denom;

    const Eigen::VectorXd r = regress_.count() > 0
                                  ? regress_.predict(x)
                                  : Eigen::VectorXd::Zero(regress_.targets());
    const int b = block_of(p.label);
    BoxDeltas d{};
    for (int k = 0; k < 4; ++k) d[k] = b >= 0 ? r[4 * b + k] : 0.0;
    d[2] = std::clamp(d[2], -kMaxLogScale, kMaxLogScale);
    d[3] = std::clamp(d[3], -kMaxLogScale, kMaxLogScale);
    try {
      out.push_back({proposals.image_id,
                     clip_box(decode_deltas(proposals.boxes[i], d), image_w,
                              image_h),
                     p.label, std::clamp(score, 0.0, 1.0)});
    } catch (const Error&) {
      // decoded box fell outside the image
    }
  }
  return out;
}

std::vector<std::uint8_t> SldaRegressDetector::serialize() const {
  ByteWriter w;
  w.put_magic("RSLD");
  w.put_u32(static_cast<std::uint32_t>(classes_.size()));
  for (ClassId c : classes_) w.put_u32(static_cast<std::uint32_t>(c));
  slda_.write(w);
  regress_.write(w);
  return w.take();
}

SldaRegressDetector SldaRegressDetector::deserialize(
    std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("RSLD");
  std::vector<ClassId> classes(r.get_u32());
  for (auto& c : classes) c = static_cast<ClassId>(r.get_u32());
  SldaModel slda = SldaModel::read(r);
  StreamRegressModel reg = StreamRegressModel::read(r);
  r.expect_end();
  if (reg.dim() != slda.dim() ||
      reg.targets() != 4 * static_cast<int>(classes.size() + 1)) {
    r.error("slda and regressor shapes disagree");
  }
  SldaRegressDetector det(slda.dim(), slda.shrinkage(), reg.shrinkage());
  det.classes_ = std::move(classes);
  det.slda_ = std::move(slda);
  det.regress_ = std::move(reg);
  return det;
}

}  // namespace streamdet
