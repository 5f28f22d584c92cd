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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "streamdet/config.hpp"
#include "streamdet/core.hpp"
#include "streamdet/eval.hpp"
#include "streamdet/head.hpp"
#include "streamdet/pq.hpp"
#include "streamdet/replay_buffer.hpp"
#include "streamdet/slda.hpp"
#include "streamdet/synthetic.hpp"

namespace streamdet {

struct StepRecord {
  std::size_t step = 0;
  ClassId increment = 0;
  ImageId image_id;
  std::vector<ClassId> visible;
  std::optional<double> loss;  // absent for the closed-form learner
  std::vector<ImageId> replay;
  bool replay_truncated = false;
  bool inserted = false;
  std::size_t boxes_added = 0;
  std::vector<ImageId> evicted;
  std::size_t buffer_entries = 0;
  std::size_t buffer_bytes = 0;

  nlohmann::json to_json() const;
};

struct StreamLog {
  std::vector<StepRecord> steps;
  std::vector<EvalReport> checkpoints;

  /// One JSON object per line: steps and checkpoints in event order.
  std::string to_jsonl() const;
};

/// Head parameters after offline training on a class set.
struct TrainedHead {
  HeadParams params;
  SgdState sgd;
};

/// All mutable learner state. Holds pointers into the dataset it was
/// initialized from, which must outlive it.
struct StreamState {
  ExperimentConfig config;
  ClassSchedule schedule;
  std::vector<ClassId> revealed;  // in reveal order
  std::set<ClassId> visible;
  std::map<ImageId, const ImageRecord*> train_index;

  std::optional<PQModel> pq;
  std::optional<ReplayBuffer> buffer;
  std::optional<TrainedHead> head;
  std::optional<SldaRegressDetector> slda;

  std::size_t step = 0;
  int increments_done = 0;
};

/// Multi-epoch offline head training over train images holding a class in
/// `classes`, labels restricted to `classes`.
TrainedHead train_offline_head(const ExperimentConfig& config,
                               const Dataset& data,
                               const std::set<ClassId>& classes);

/// Base initialization: the learner fitted on base classes, and for RODEO
/// the PQ model and a buffer seeded with every base image. `base_head`, if
/// given, replaces offline head training (it must match the config).
StreamState base_initialize(const ExperimentConfig& config, const Dataset& data,
                            const TrainedHead* base_head = nullptr);

/// One streaming update on `image`, labelled only with class `increment`.
StepRecord stream_step(StreamState& state, const ImageRecord& image,
                       ClassId increment);

/// Reveals class `c` and streams every train image holding it once, in a
/// seeded shuffled order. Throws kSchedule if `c` is not the next class.
std::vector<StepRecord> run_increment(StreamState& state, ClassId c);

/// Detections for one image before NMS.
std::vector<Detection> detect_raw(const StreamState& state,
                                  const ImageRecord& image);

/// mAP over visible classes on test images holding a visible class.
EvalReport evaluate_checkpoint(const StreamState& state,
                               const std::vector<ImageRecord>& test, int t);

/// Same protocol for an offline-trained head.
EvalReport evaluate_head(const HeadParams& head, const ExperimentConfig& config,
                         const std::vector<ImageRecord>& test,
                         const std::set<ClassId>& classes, int t);

/// Increment counts at which checkpoints are taken: 0, every eval_every-th
/// increment, and the last increment.
std::vector<int> checkpoint_times(const ClassSchedule& schedule);

/// Offline mAP per checkpoint from heads retrained on the classes seen so
/// far. `base_head`, if given, serves the first checkpoint.
std::vector<double> offline_curve(const ExperimentConfig& config,
                                  const Dataset& data,
                                  const TrainedHead* base_head = nullptr);

struct AuditResult {
  bool ok = true;
  std::size_t pairs = 0;
  std::vector<std::string> problems;
};

/// Checks every (image, increment) pair of the schedule was streamed
/// exactly once, nothing else was, and checkpoints follow eval_every.
AuditResult audit_single_pass(const StreamLog& log, const Dataset& data,
                              const ClassSchedule& schedule);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  const TrainedHead* base_head = nullptr;
  /// Overrides the config's offline normalization.
  std::optional<std::vector<double>> offline;
};

struct ExperimentResult {
  ClassSchedule schedule;
  StreamLog log;
  std::vector<int> times;
  std::vector<double> alphas;
  std::optional<std::vector<double>> offline;
  std::optional<double> omega;
  AuditResult audit;
  StreamState state;

  nlohmann::json report_json() const;
};

/// Loads the configured dataset (generating it for an inline spec).
Dataset load_experiment_data(const ExperimentConfig& config);

/// Base init, the full stream and every checkpoint. With `out_dir`, writes
/// config.json, pq.bin, buffer/, checkpoints/, stream_log.jsonl,
/// curves.csv and report.json.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const Dataset& data,
                                const RunOptions& options = {});

}  // namespace streamdet
