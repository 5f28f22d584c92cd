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

#include "streamdet/driver.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "streamdet/binary_io.hpp"
#include "streamdet/error.hpp"
#include "streamdet/io.hpp"
#include "streamdet/rng.hpp"
#include "streamdet/targets.hpp"

namespace streamdet {

namespace {

constexpr std::uint64_t kBaseOrderStream = 0xBA5E;
constexpr std::uint64_t kMinibatchStream = 0x3B;
constexpr std::uint64_t kIncrementStream = 0x1C;
constexpr std::uint64_t kSeedingStream = 0x5EED;

struct TrainImage {
  const FeatureMap* features;
  ImageAnnotation gt;
  const ProposalSet* proposals;
};

/// Pools the sampled boxes of each image into one batch.
struct Batch {
  std::vector<Eigen::MatrixXd> pooled;
  std::vector<RoiTarget> targets;
  std::size_t rows = 0;

  void add(const FeatureMap& fmap, const ImageAnnotation& gt,
           const ProposalSet& props, const std::set<ClassId>& visible,
           const ExperimentConfig& config, std::uint64_t seed) {
    const auto labelled =
        label_proposals(props, gt, visible, config.targets.iou_foreground);
    MiniBatch mb = sample_minibatch(labelled, seed, config.targets.batch_boxes,
                                    config.targets.positive_fraction);
    std::vector<BoundingBox> boxes;
    boxes.reserve(mb.rois.size());
    for (const auto& r : mb.rois) boxes.push_back(r.box);
    pooled.push_back(pool_boxes(fmap, boxes, gt.image_w, gt.image_h,
                                config.head.bins));
    rows += mb.rois.size();
    targets.insert(targets.end(), mb.rois.begin(), mb.rois.end());
  }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                      pooled.empty() ? 0 : pooled.front().cols());
    Eigen::Index r = 0;
    for (const auto& p : pooled) {
      m.middleRows(r, p.rows()) = p;
      r += p.rows();
    }
    return m;
  }
};

/// One SGD step over `batch`; returns the loss, or nothing if empty.
std::optional<double> train_step(TrainedHead& head, const Batch& batch) {
  if (batch.rows == 0) return std::nullopt;
  const auto lg = loss_and_grads(head.params, batch.matrix(), batch.targets);
  sgd_step(head.params, head.sgd, lg.grads);
  return lg.loss;
}

std::vector<const ImageRecord*> images_with_any(
    const std::vector<ImageRecord>& split, const std::set<ClassId>& classes) {
  std::vector<const ImageRecord*> out;
  for (const auto& rec : split) {
    for (const auto& b : rec.annotation.boxes) {
      if (classes.contains(b.class_id)) {
        out.push_back(&rec);
        break;
      }
    }
  }
  return out;
}

std::set<ClassId> classes_through(const ClassSchedule& s, int increments) {
  std::set<ClassId> out(s.base_classes.begin(), s.base_classes.end());
  for (int i = 0; i < increments; ++i) out.insert(s.incremental_classes[i]);
  return out;
}

/// Pooled proposal features with all-zero rows removed, plus the kept
/// proposals. Zero rows cannot be L2-normalized.
std::pair<Eigen::MatrixXd, ProposalSet> pooled_nonzero(
    const FeatureMap& fmap, const ProposalSet& props, int image_w, int image_h,
    PoolBins bins) {
  const Eigen::MatrixXd all =
      pool_boxes(fmap, props.boxes, image_w, image_h, bins);
  ProposalSet kept{props.image_id, {}};
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < all.rows(); ++i) {
    if (all.row(i).norm() > 0) {
      rows.push_back(i);
      kept.boxes.push_back(props.boxes[static_cast<std::size_t>(i)]);
    }
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), all.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = all.row(rows[k]);
  }
  return {std::move(out), std::move(kept)};
}

void slda_fit(SldaRegressDetector& det, const ExperimentConfig& config,
              const FeatureMap& fmap, const ImageAnnotation& gt,
              const ProposalSet& props, const std::set<ClassId>& visible) {
  auto [features, kept] =
      pooled_nonzero(fmap, props, gt.image_w, gt.image_h, config.head.bins);
  const auto targets =
      label_proposals(kept, gt, visible, config.targets.iou_foreground);
  std::vector<BoundingBox> gt_boxes;
  for (const auto& b : gt.boxes) gt_boxes.push_back(b.box);
  const Eigen::MatrixXd gt_features =
      pool_boxes(fmap, gt_boxes, gt.image_w, gt.image_h, config.head.bins);
  det.fit_image(features, targets, gt, gt_features);
}

std::vector<Detection> postprocess(std::vector<Detection> dets,
                                   const ExperimentConfig& config) {
  return nms(dets, config.eval.nms_iou,
             static_cast<std::size_t>(config.eval.max_detections));
}

EvalReport evaluate_with(
    const std::vector<ImageRecord>& test, const std::set<ClassId>& classes,
    int t, const ExperimentConfig& config,
    const std::function<std::vector<Detection>(const ImageRecord&)>& detect) {
  std::vector<Detection> dets;
  std::vector<ImageAnnotation> anns;
  for (const ImageRecord* rec : images_with_any(test, classes)) {
    auto image_dets = postprocess(detect(*rec), config);
    for (auto& d : image_dets) {
      if (classes.contains(d.class_id)) dets.push_back(std::move(d));
    }
    anns.push_back(rec->annotation.restricted_to(classes));
  }
  return evaluate(dets, anns, classes, t,
                  {config.eval.interpolation, 0.5});
}

std::string checkpoint_name(const char* stem, int increments,
                            const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d%s", stem, increments, ext);
  return buf;
}

void write_model_checkpoint(const StreamState& state,
                            const std::filesystem::path& out) {
  const int k = state.increments_done;
  if (state.head) {
    write_file_atomic(out / "checkpoints" / checkpoint_name("head", k, ".bin"),
                      state.head->params.serialize());
  }
  if (state.slda) {
    write_file_atomic(out / "checkpoints" / checkpoint_name("slda", k, ".bin"),
                      state.slda->serialize());
  }
  if (state.buffer && state.pq) {
    write_file_atomic(out / "buffer" / checkpoint_name("buffer", k, ".bin"),
                      state.buffer->serialize(state.pq->fingerprint()));
  }
}

}  // namespace

// ------------------------------------------------------------------- logs

nlohmann::json StepRecord::to_json() const {
  nlohmann::json j{{"type", "step"},
                   {"step", step},
                   {"increment", increment},
                   {"image_id", image_id},
                   {"visible", visible},
                   {"replay", replay},
                   {"replay_truncated", replay_truncated},
                   {"inserted", inserted},
                   {"boxes_added", boxes_added},
                   {"evicted", evicted},
                   {"buffer_entries", buffer_entries},
                   {"buffer_bytes", buffer_bytes}};
  j["loss"] = loss ? nlohmann::json(*loss) : nlohmann::json(nullptr);
  return j;
}

std::string StreamLog::to_jsonl() const {
  // Checkpoint t follows the last step of increment t.
  std::string out;
  std::size_t next_ckpt = 0;
  int increments_seen = 0;
  ClassId current = -1;
  auto flush_checkpoints = [&](int upto) {
    while (next_ckpt < checkpoints.size() && checkpoints[next_ckpt].t <= upto) {
      auto j = checkpoints[next_ckpt].to_json();
      j["type"] = "checkpoint";
      out += j.dump() + "\n";
      ++next_ckpt;
    }
  };
  flush_checkpoints(0);
  for (const auto& s : steps) {
    if (s.increment != current) {
      if (current != -1) flush_checkpoints(increments_seen);
      current = s.increment;
      ++increments_seen;
    }
    out += s.to_json().dump() + "\n";
  }
  flush_checkpoints(std::numeric_limits<int>::max());
  return out;
}

// --------------------------------------------------------------- training

TrainedHead train_offline_head(const ExperimentConfig& config,
                               const Dataset& data,
                               const std::set<ClassId>& classes) {
  if (data.train.empty()) fail(ErrorKind::kConfig, "dataset has no train images");
  const int channels = data.train.front().features.channels;
  const std::vector<ClassId> ordered(classes.begin(), classes.end());
  TrainedHead head;
  head.params = init_head(channels, config.head.bins, config.head.hidden,
                          ordered, config.seeds.head_init);
  head.sgd = SgdState::for_params(head.params, config.sgd.learning_rate,
                                  config.sgd.momentum, config.sgd.weight_decay);

  std::vector<TrainImage> items;
  for (const ImageRecord* rec : images_with_any(data.train, classes)) {
    items.push_back({&rec->features, rec->annotation.restricted_to(classes),
                     &rec->proposals});
  }
  const std::uint64_t order_seed = mix_seed(config.seeds.shuffle, kBaseOrderStream);
  for (int epoch = 0; epoch < config.base_epochs; ++epoch) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(order_seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    const std::uint64_t mb_seed =
        mix_seed(mix_seed(order_seed, kMinibatchStream), epoch);
    for (std::size_t i = 0; i < order.size();
         i += static_cast<std::size_t>(config.offline_batch_images)) {
      Batch batch;
      const std::size_t end = std::min(
          order.size(), i + static_cast<std::size_t>(config.offline_batch_images));
      for (std::size_t k = i; k < end; ++k) {
        const TrainImage& it = items[order[k]];
        batch.add(*it.features, it.gt, *it.proposals, classes, config,
                  mix_seed(mb_seed, k));
      }
      train_step(head, batch);
    }
  }
  return head;
}

StreamState base_initialize(const ExperimentConfig& config, const Dataset& data,
                            const TrainedHead* base_head) {
  config.validate();
  StreamState state;
  state.config = config;
  state.schedule = config.schedule(data.classes);
  state.revealed = state.schedule.base_classes;
  state.visible = {state.revealed.begin(), state.revealed.end()};
  for (const auto& rec : data.train) {
    state.train_index.emplace(rec.annotation.image_id, &rec);
  }
  const auto base_images = images_with_any(data.train, state.visible);
  if (base_images.empty()) {
    fail(ErrorKind::kConfig, "no train image holds a base class");
  }
  for (ClassId c : state.schedule.base_classes) {
    if (images_with_any(data.train, {c}).empty()) {
      fail(ErrorKind::kConfig, "base class " + std::to_string(c) +
                                   " has no train images");
    }
  }

  if (config.learner == Learner::kSldaRegress) {
    const int dim = config.head.bins.rows * config.head.bins.cols *
                    data.train.front().features.channels;
    state.slda.emplace(dim, config.slda.slda_shrinkage,
                       config.slda.regress_shrinkage);
    for (ClassId c : state.schedule.base_classes) state.slda->add_class(c);
    std::vector<const ImageRecord*> order = base_images;
    Rng rng(mix_seed(config.seeds.shuffle, kBaseOrderStream));
    rng.shuffle(order);
    for (const ImageRecord* rec : order) {
      slda_fit(*state.slda, config, rec->features,
               rec->annotation.restricted_to(state.visible), rec->proposals,
               state.visible);
    }
    return state;
  }

  if (base_head) {
    if (base_head->params.classes != state.schedule.base_classes) {
      fail(ErrorKind::kConfig, "supplied base head was trained on other classes");
    }
    state.head = *base_head;
  } else {
    state.head = train_offline_head(config, data, state.visible);
  }

  if (config.learner == Learner::kRodeo) {
    const int d = data.train.front().features.channels;
    if (d % config.pq.num_codebooks != 0) {
      fail(ErrorKind::kConfig, "feature channels " + std::to_string(d) +
                                   " are not divisible by pq.num_codebooks " +
                                   std::to_string(config.pq.num_codebooks));
    }
    VectorSet samples{d, {}};
    for (const ImageRecord* rec : base_images) {
      const VectorSet part =
          config.pq.sample_locations > 0
              ? subsample_locations(
                    rec->features,
                    std::min<int>(config.pq.sample_locations,
                                  static_cast<int>(rec->features.cell_count())),
                    mix_seed(config.seeds.pq, std::hash<std::string>{}(
                                                  rec->annotation.image_id)))
              : all_locations(rec->features);
      samples.data.insert(samples.data.end(), part.data.begin(), part.data.end());
    }
    state.pq = train_pq(samples, config.pq.num_codebooks,
                        config.pq.codebook_size, config.seeds.pq, config.pq.iters);
    state.buffer.emplace(config.capacity, config.policy, config.seeds.buffer);
    std::vector<const ImageRecord*> order = base_images;
    Rng rng(mix_seed(config.seeds.buffer, kSeedingStream));
    rng.shuffle(order);
    for (const ImageRecord* rec : order) {
      state.buffer->upsert(encode(*state.pq, rec->features),
                           rec->annotation.restricted_to(state.visible));
    }
  }
  return state;
}

// -------------------------------------------------------------- streaming

StepRecord stream_step(StreamState& state, const ImageRecord& image,
                       ClassId increment) {
  if (!state.visible.contains(increment)) {
    fail(ErrorKind::kSchedule, "class " + std::to_string(increment) +
                                   " has not been revealed");
  }
  const ExperimentConfig& config = state.config;
  const ImageAnnotation current = image.annotation.restricted_to({increment});
  if (current.boxes.empty()) {
    fail(ErrorKind::kPrecondition, "image '" + image.annotation.image_id +
                                       "' holds no box of class " +
                                       std::to_string(increment));
  }
  StepRecord rec;
  rec.step = state.step++;
  rec.increment = increment;
  rec.image_id = image.annotation.image_id;
  rec.visible = {state.visible.begin(), state.visible.end()};
  const std::uint64_t mb_seed =
      mix_seed(mix_seed(config.seeds.shuffle, kMinibatchStream), rec.step);

  switch (config.learner) {
    case Learner::kSldaRegress:
      slda_fit(*state.slda, config, image.features, current, image.proposals,
               state.visible);
      break;
    case Learner::kFineTune: {
      Batch batch;
      batch.add(image.features, current, image.proposals, state.visible,
                config, mix_seed(mb_seed, 0));
      rec.loss = train_step(*state.head, batch);
      break;
    }
    case Learner::kRodeo: {
      ReplayBuffer& buffer = *state.buffer;
      const PQModel& pq = *state.pq;
      const QuantizedFeatureMap codes = encode(pq, image.features);
      const UpsertReport up = buffer.upsert(codes, current);
      rec.inserted = up.inserted;
      rec.boxes_added = up.boxes_added;
      rec.evicted = up.evicted;
      const BufferSample replay = buffer.sample(
          static_cast<std::size_t>(config.replay_n - 1),
          mix_seed(config.seeds.buffer, rec.step), rec.image_id);
      rec.replay_truncated = replay.truncated;

      Batch batch;
      const ImageAnnotation& merged = buffer.contains(rec.image_id)
                                          ? buffer.entry(rec.image_id).annotation
                                          : current;
      batch.add(decode(pq, codes), merged, image.proposals, state.visible,
                config, mix_seed(mb_seed, 0));
      std::uint64_t k = 1;
      for (const BufferEntry& e : replay.entries) {
        rec.replay.push_back(e.image_id);
        const auto it = state.train_index.find(e.image_id);
        if (it == state.train_index.end()) {
          fail(ErrorKind::kCorruption,
               "buffer entry '" + e.image_id + "' has no proposals");
        }
        batch.add(decode(pq, e.codes), e.annotation, it->second->proposals,
                  state.visible, config, mix_seed(mb_seed, k++));
      }
      rec.loss = train_step(*state.head, batch);
      const BufferStats st = buffer.stats();
      rec.buffer_entries = st.entry_count;
      rec.buffer_bytes = st.byte_count;
      break;
    }
  }
  return rec;
}

std::vector<StepRecord> run_increment(StreamState& state, ClassId c) {
  const auto& inc = state.schedule.incremental_classes;
  if (state.increments_done >= static_cast<int>(inc.size()) ||
      inc[state.increments_done] != c) {
    fail(ErrorKind::kSchedule,
         state.visible.contains(c)
             ? "class " + std::to_string(c) + " was already learned"
             : "class " + std::to_string(c) + " is not the next scheduled class");
  }
  state.revealed.push_back(c);
  state.visible.insert(c);
  if (state.head) {
    add_class(state.head->params, state.head->sgd, c,
              mix_seed(state.config.seeds.head_init, static_cast<std::uint64_t>(c)));
  }
  if (state.slda) state.slda->add_class(c);

  std::vector<const ImageRecord*> images;
  for (const auto& [id, rec] : state.train_index) {
    if (rec->annotation.has_class(c)) images.push_back(rec);
  }
  Rng rng(mix_seed(mix_seed(state.config.seeds.shuffle, kIncrementStream),
                   static_cast<std::uint64_t>(c)));
  rng.shuffle(images);
  std::vector<StepRecord> out;
  out.reserve(images.size());
  for (const ImageRecord* rec : images) out.push_back(stream_step(state, *rec, c));
  ++state.increments_done;
  return out;
}

// ------------------------------------------------------------- evaluation

std::vector<Detection> detect_raw(const StreamState& state,
                                  const ImageRecord& image) {
  const auto& ann = image.annotation;
  if (state.slda) {
    auto [features, kept] = pooled_nonzero(image.features, image.proposals,
                                           ann.image_w, ann.image_h,
                                           state.config.head.bins);
    return state.slda->detect(features, kept, ann.image_w, ann.image_h);
  }
  return head_detect(state.head->params, image.features, image.proposals,
                     ann.image_w, ann.image_h, state.config.eval.min_score);
}

EvalReport evaluate_checkpoint(const StreamState& state,
                               const std::vector<ImageRecord>& test, int t) {
  return evaluate_with(test, state.visible, t, state.config,
                       [&](const ImageRecord& r) { return detect_raw(state, r); });
}

EvalReport evaluate_head(const HeadParams& head, const ExperimentConfig& config,
                         const std::vector<ImageRecord>& test,
                         const std::set<ClassId>& classes, int t) {
  return evaluate_with(test, classes, t, config, [&](const ImageRecord& r) {
    return head_detect(head, r.features, r.proposals, r.annotation.image_w,
                       r.annotation.image_h, config.eval.min_score);
  });
}

std::vector<int> checkpoint_times(const ClassSchedule& schedule) {
  const int n = static_cast<int>(schedule.incremental_classes.size());
  std::vector<int> times{0};
  for (int k = 1; k <= n; ++k) {
    if (k % schedule.eval_every == 0 || k == n) times.push_back(k);
  }
  return times;
}

std::vector<double> offline_curve(const ExperimentConfig& config,
                                  const Dataset& data,
                                  const TrainedHead* base_head) {
  const ClassSchedule schedule = config.schedule(data.classes);
  std::vector<double> out;
  for (int t : checkpoint_times(schedule)) {
    const auto classes = classes_through(schedule, t);
    if (t == 0 && base_head) {
      out.push_back(evaluate_head(base_head->params, config, data.test, classes, t).map);
      continue;
    }
    const TrainedHead head = train_offline_head(config, data, classes);
    out.push_back(evaluate_head(head.params, config, data.test, classes, t).map);
  }
  return out;
}

AuditResult audit_single_pass(const StreamLog& log, const Dataset& data,
                              const ClassSchedule& schedule) {
  AuditResult a;
  std::map<std::pair<ImageId, ClassId>, int> expected;
  for (ClassId c : schedule.incremental_classes) {
    for (const auto& rec : data.train) {
      if (rec.annotation.has_class(c)) expected[{rec.annotation.image_id, c}] = 0;
    }
  }
  for (const auto& s : log.steps) {
    auto it = expected.find({s.image_id, s.increment});
    if (it == expected.end()) {
      a.problems.push_back("unexpected step on ('" + s.image_id + "', " +
                           std::to_string(s.increment) + ")");
      continue;
    }
    ++it->second;
  }
  for (const auto& [pair, n] : expected) {
    if (n != 1) {
      a.problems.push_back("('" + pair.first + "', " +
                           std::to_string(pair.second) + ") streamed " +
                           std::to_string(n) + " times");
    }
  }
  std::vector<int> times;
  for (const auto& r : log.checkpoints) times.push_back(r.t);
  if (times != checkpoint_times(schedule)) {
    a.problems.push_back("checkpoint times do not follow eval_every");
  }
  for (std::size_t i = 1; i < log.steps.size(); ++i) {
    if (log.steps[i].step != log.steps[i - 1].step + 1) {
      a.problems.push_back("step indices are not consecutive");
      break;
    }
  }
  a.pairs = expected.size();
  a.ok = a.problems.empty();
  return a;
}

// ------------------------------------------------------------ experiments

Dataset load_experiment_data(const ExperimentConfig& config) {
  if (config.synthetic) {
    SyntheticSpec spec = *config.synthetic;
    spec.seed = config.seeds.data;
    return generate_dataset(spec);
  }
  if (!config.dataset_dir) fail(ErrorKind::kConfig, "no dataset configured");
  return load_dataset(*config.dataset_dir);
}

nlohmann::json ExperimentResult::report_json() const {
  nlohmann::json j{{"learner", to_string(state.config.learner)},
                   {"policy", to_string(state.config.policy)},
                   {"replay_n", state.config.replay_n},
                   {"checkpoint_times", times},
                   {"alphas", alphas},
                   {"mean_map", alphas.empty()
                                    ? 0.0
                                    : std::accumulate(alphas.begin(), alphas.end(), 0.0) /
                                          static_cast<double>(alphas.size())},
                   {"steps", log.steps.size()},
                   {"audit",
                    {{"ok", audit.ok},
                     {"pairs", audit.pairs},
                     {"problems", audit.problems}}}};
  j["offline"] = offline ? nlohmann::json(*offline) : nlohmann::json(nullptr);
  j["omega_map"] = omega ? nlohmann::json(*omega) : nlohmann::json(nullptr);
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : log.checkpoints) reports.push_back(r.to_json());
  j["checkpoints"] = reports;
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const Dataset& data, const RunOptions& options) {
  const auto& out = options.out_dir;
  if (out) {
    std::filesystem::create_directories(*out);
    write_json(*out / "config.json", config.to_json());
  }
  ExperimentResult result;
  result.state = base_initialize(config, data, options.base_head);
  StreamState& state = result.state;
  result.schedule = state.schedule;
  result.times = checkpoint_times(state.schedule);
  if (out && state.pq) write_file_atomic(*out / "pq.bin", state.pq->serialize());
  if (out) write_model_checkpoint(state, *out);

  std::size_t next = 0;
  auto checkpoint_if_due = [&]() {
    if (next < result.times.size() && result.times[next] == state.increments_done) {
      result.log.checkpoints.push_back(
          evaluate_checkpoint(state, data.test, state.increments_done));
      result.alphas.push_back(result.log.checkpoints.back().map);
      ++next;
    }
  };
  checkpoint_if_due();
  for (ClassId c : state.schedule.incremental_classes) {
    auto steps = run_increment(state, c);
    result.log.steps.insert(result.log.steps.end(),
                            std::make_move_iterator(steps.begin()),
                            std::make_move_iterator(steps.end()));
    if (out) write_model_checkpoint(state, *out);
    checkpoint_if_due();
  }
  result.audit = audit_single_pass(result.log, data, state.schedule);

  if (options.offline) {
    result.offline = *options.offline;
  } else {
    switch (config.offline.mode) {
      case OfflineSettings::Mode::kNone:
        break;
      case OfflineSettings::Mode::kConstant:
        result.offline = std::vector<double>(result.alphas.size(),
                                             config.offline.constant);
        break;
      case OfflineSettings::Mode::kCurve:
        result.offline = read_curve_maps(config.offline.curve);
        break;
      case OfflineSettings::Mode::kRetrain:
        result.offline = offline_curve(config, data, options.base_head);
        break;
    }
  }
  if (result.offline) {
    if (result.offline->size() != result.alphas.size()) {
      fail(ErrorKind::kConfig,
           "offline normalization has " + std::to_string(result.offline->size()) +
               " values for " + std::to_string(result.alphas.size()) +
               " checkpoints");
    }
    result.omega = omega_map(result.alphas, *result.offline);
  }

  if (out) {
    write_file_atomic(*out / "stream_log.jsonl", result.log.to_jsonl());
    const std::vector<ClassId> all = state.schedule.all_classes();
    write_file_atomic(*out / "curves.csv", curves_csv(result.log.checkpoints, all));
    write_json(*out / "report.json", result.report_json());
  }
  return result;
}

}  // namespace streamdet
