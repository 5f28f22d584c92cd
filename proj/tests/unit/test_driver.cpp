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

#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "streamdet/binary_io.hpp"
#include "streamdet/driver.hpp"
#include "streamdet/error.hpp"
#include "test_util.hpp"

using namespace streamdet;

namespace {

ExperimentConfig tiny_config(Learner learner = Learner::kRodeo) {
  ExperimentConfig c;
  c.learner = learner;
  SyntheticSpec s;
  s.num_classes = 4;
  s.images_per_class = 12;
  s.channels = 8;
  s.proposals_per_image = 32;
  c.synthetic = s;
  c.pq = {4, 16, 5, 0};
  c.head.hidden = 16;
  c.sgd.learning_rate = 0.01;
  c.base_epochs = 2;
  c.capacity = BufferCapacity::entries(20);
  c.replay_n = 3;
  return c;
}

const Dataset& tiny_data() {
  static const Dataset d = load_experiment_data(tiny_config());
  return d;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kDomain;
}

}  // namespace

TEST_CASE("checkpoint times follow eval_every and include the last increment") {
  std::vector<ClassId> voc(20);
  std::iota(voc.begin(), voc.end(), 1);
  const auto voc_times = checkpoint_times(ClassSchedule::half_split(voc, 1));
  CHECK(voc_times.size() == 11);
  CHECK(voc_times.back() == 10);

  std::vector<ClassId> coco(80);
  std::iota(coco.begin(), coco.end(), 1);
  const auto coco_times = checkpoint_times(ClassSchedule::half_split(coco, 10));
  CHECK(coco_times == std::vector<int>{0, 10, 20, 30, 40});
  CHECK(checkpoint_times(ClassSchedule::half_split(voc, 3)) ==
        std::vector<int>{0, 3, 6, 9, 10});
}

TEST_CASE("a RODEO run streams every pair once and respects the buffer") {
  const Dataset& data = tiny_data();
  const ExperimentResult r = run_experiment(tiny_config(), data);
  CHECK(r.audit.ok);
  CHECK(r.audit.pairs == r.log.steps.size());
  CHECK(r.schedule.base_classes == std::vector<ClassId>{1, 2});
  CHECK(r.times == std::vector<int>{0, 1, 2});
  CHECK(r.alphas.size() == 3);
  CHECK_FALSE(r.omega.has_value());
  for (const auto& s : r.log.steps) {
    CHECK(s.loss.has_value());
    CHECK(s.buffer_entries <= 20);
    CHECK(s.replay.size() <= 2);
    CHECK(std::find(s.replay.begin(), s.replay.end(), s.image_id) == s.replay.end());
    CHECK(std::find(s.visible.begin(), s.visible.end(), s.increment) != s.visible.end());
  }
  for (const auto& ck : r.log.checkpoints) {
    CHECK(ck.map >= 0.0);
    CHECK(ck.map <= 1.0);
  }
  CHECK(r.log.checkpoints.back().classes_evaluated == std::set<ClassId>{1, 2, 3, 4});
  CHECK(r.log.checkpoints.front().classes_evaluated == std::set<ClassId>{1, 2});
}

TEST_CASE("images holding two incremental classes are merged, not duplicated") {
  ExperimentConfig c = tiny_config();
  c.policy = ReplacementPolicy::kNoReplace;
  const ExperimentResult r = run_experiment(c, tiny_data());
  std::set<ImageId> stored;
  std::size_t base_images = 0;
  for (const auto& rec : tiny_data().train) {
    if (rec.annotation.has_class(1) || rec.annotation.has_class(2)) {
      stored.insert(rec.annotation.image_id);
      ++base_images;
    }
  }
  bool merged = false;
  std::size_t fresh = 0;
  for (const auto& s : r.log.steps) {
    const bool known = stored.contains(s.image_id);
    CHECK(s.inserted == !known);
    if (known) {
      CHECK(s.boxes_added > 0);
      merged = true;
    }
    stored.insert(s.image_id);
    fresh += s.inserted;
    CHECK(s.evicted.empty());
  }
  CHECK(merged);
  CHECK(r.state.buffer->size() == base_images + fresh);
}

TEST_CASE("reruns with the same seeds are bit-identical") {
  test::TempDir a, b;
  const ExperimentResult x = run_experiment(tiny_config(), tiny_data(), {a.path()});
  const ExperimentResult y = run_experiment(tiny_config(), tiny_data(), {b.path()});
  CHECK(x.log.to_jsonl() == y.log.to_jsonl());
  CHECK(x.alphas == y.alphas);
  CHECK(x.state.head->params.serialize() == y.state.head->params.serialize());
  for (const char* f : {"config.json", "pq.bin", "stream_log.jsonl", "curves.csv",
                        "report.json", "checkpoints/head_002.bin",
                        "buffer/buffer_000.bin"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(a.path() / f));
    CHECK(read_file_bytes(a.path() / f) == read_file_bytes(b.path() / f));
  }

  ExperimentConfig other = tiny_config();
  other.seeds.shuffle = 99;
  const ExperimentResult z = run_experiment(other, tiny_data());
  CHECK(z.log.to_jsonl() != x.log.to_jsonl());
}

TEST_CASE("the stream log is one JSON object per event") {
  const ExperimentResult r = run_experiment(tiny_config(), tiny_data());
  std::istringstream in(r.log.to_jsonl());
  std::string line;
  std::size_t steps = 0, checkpoints = 0;
  std::string last_type;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const std::string type = j.at("type");
    (type == "step" ? steps : checkpoints) += 1;
    last_type = type;
  }
  CHECK(steps == r.log.steps.size());
  CHECK(checkpoints == 3);
  CHECK(last_type == "checkpoint");
  const auto report = r.report_json();
  CHECK(report.at("audit").at("ok") == true);
  CHECK(report.at("alphas").size() == 3);
}

TEST_CASE("a single-image replay budget draws nothing from the buffer") {
  ExperimentConfig c = tiny_config();
  c.replay_n = 1;
  const ExperimentResult r = run_experiment(c, tiny_data());
  for (const auto& s : r.log.steps) {
    CHECK(s.replay.empty());
    CHECK_FALSE(s.replay_truncated);
  }
}

TEST_CASE("fine-tune and closed-form learners follow the same protocol") {
  const ExperimentResult ft = run_experiment(tiny_config(Learner::kFineTune), tiny_data());
  CHECK(ft.audit.ok);
  CHECK_FALSE(ft.state.buffer.has_value());
  for (const auto& s : ft.log.steps) {
    CHECK(s.loss.has_value());
    CHECK(s.replay.empty());
  }
  const ExperimentResult slda =
      run_experiment(tiny_config(Learner::kSldaRegress), tiny_data());
  CHECK(slda.audit.ok);
  CHECK(slda.state.slda.has_value());
  CHECK(slda.state.slda->classes() == std::vector<ClassId>{1, 2, 3, 4});
  for (const auto& s : slda.log.steps) CHECK_FALSE(s.loss.has_value());
  CHECK(slda.alphas.size() == 3);
}

TEST_CASE("constant offline normalization divides the mean") {
  ExperimentConfig c = tiny_config(Learner::kFineTune);
  c.offline.mode = OfflineSettings::Mode::kConstant;
  c.offline.constant = 0.5;
  const ExperimentResult r = run_experiment(c, tiny_data());
  REQUIRE(r.omega.has_value());
  double mean = 0;
  for (double a : r.alphas) mean += a;
  mean /= static_cast<double>(r.alphas.size());
  CHECK(*r.omega == doctest::Approx(mean / 0.5));

  RunOptions wrong;
  wrong.offline = std::vector<double>{1.0};
  CHECK(kind_of([&] { run_experiment(c, tiny_data(), wrong); }) == ErrorKind::kConfig);
}

TEST_CASE("schedule violations are rejected") {
  StreamState s = base_initialize(tiny_config(), tiny_data());
  const ImageRecord* with4 = nullptr;
  const ImageRecord* without3 = nullptr;
  for (const auto& rec : tiny_data().train) {
    if (!with4 && rec.annotation.has_class(4)) with4 = &rec;
    if (!without3 && !rec.annotation.has_class(3)) without3 = &rec;
  }
  REQUIRE(with4);
  REQUIRE(without3);
  CHECK(kind_of([&] { run_increment(s, 4); }) == ErrorKind::kSchedule);
  CHECK(kind_of([&] { stream_step(s, *with4, 4); }) == ErrorKind::kSchedule);
  run_increment(s, 3);
  CHECK(kind_of([&] { run_increment(s, 3); }) == ErrorKind::kSchedule);
  CHECK(kind_of([&] { stream_step(s, *without3, 3); }) == ErrorKind::kPrecondition);
  run_increment(s, 4);
  CHECK(kind_of([&] { run_increment(s, 4); }) == ErrorKind::kSchedule);
}

TEST_CASE("the audit catches repeated, missing and foreign steps") {
  const ExperimentResult r = run_experiment(tiny_config(Learner::kFineTune), tiny_data());
  REQUIRE(r.audit.ok);
  StreamLog repeated = r.log;
  repeated.steps.push_back(repeated.steps.front());
  repeated.steps.back().step = repeated.steps.size() - 1;
  CHECK_FALSE(audit_single_pass(repeated, tiny_data(), r.schedule).ok);
  StreamLog missing = r.log;
  missing.steps.pop_back();
  CHECK_FALSE(audit_single_pass(missing, tiny_data(), r.schedule).ok);
  StreamLog foreign = r.log;
  foreign.steps.back().increment = 1;
  CHECK_FALSE(audit_single_pass(foreign, tiny_data(), r.schedule).ok);
  StreamLog no_ckpt = r.log;
  no_ckpt.checkpoints.pop_back();
  CHECK_FALSE(audit_single_pass(no_ckpt, tiny_data(), r.schedule).ok);
}

TEST_CASE("a supplied base head must match the base classes") {
  const ExperimentConfig c = tiny_config(Learner::kFineTune);
  const TrainedHead wrong = train_offline_head(c, tiny_data(), {1, 2, 3});
  CHECK(kind_of([&] { base_initialize(c, tiny_data(), &wrong); }) == ErrorKind::kConfig);
  const TrainedHead right = train_offline_head(c, tiny_data(), {1, 2});
  const StreamState s = base_initialize(c, tiny_data(), &right);
  CHECK(s.head->params.serialize() == right.params.serialize());
}

TEST_CASE("pq settings must divide the channel count") {
  ExperimentConfig c = tiny_config();
  c.pq.num_codebooks = 3;
  CHECK(kind_of([&] { base_initialize(c, tiny_data()); }) == ErrorKind::kConfig);
}
