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

#include <fstream>

#include "doctest.h"
#include "streamdet/config.hpp"
#include "streamdet/error.hpp"
#include "test_util.hpp"

using namespace streamdet;
using Json = nlohmann::json;

namespace {

Json minimal() { return Json{{"dataset", {{"path", "data"}}}}; }

ErrorKind kind_of(const Json& j) {
  try {
    ExperimentConfig::from_json(j);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kDomain;
}

}  // namespace

TEST_CASE("omitted keys keep their defaults") {
  const ExperimentConfig c = ExperimentConfig::from_json(minimal());
  CHECK(c.learner == Learner::kRodeo);
  CHECK(c.replay_n == 4);
  CHECK(c.policy == ReplacementPolicy::kMin);
  CHECK(c.pq.num_codebooks == 8);
  CHECK(c.pq.codebook_size == 256);
  CHECK(c.head.bins.rows == 2);
  CHECK(c.sgd.learning_rate == 0.001);
  CHECK(c.sgd.momentum == 0.9);
  CHECK(c.sgd.weight_decay == 5e-4);
  CHECK(c.targets.batch_boxes == 64);
  CHECK(c.eval.nms_iou == 0.3);
  CHECK(c.eval.max_detections == 128);
  CHECK(c.offline.mode == OfflineSettings::Mode::kNone);
  CHECK(c.dataset_dir == std::filesystem::path("data"));
  CHECK_FALSE(c.synthetic.has_value());
}

TEST_CASE("config json round-trips") {
  Json j = minimal();
  j["learner"] = "FINE_TUNE";
  j["schedule"] = {{"base_classes", {1, 2}}, {"incremental_classes", {3, 4, 5}},
                   {"eval_every", 2}};
  j["buffer"] = {{"policy", "BAL"}, {"capacity_bytes", 4096}};
  j["eval"] = {{"interpolation", "11_point"}, {"min_score", 0.0}};
  j["offline"] = {{"mode", "constant"}, {"constant", 0.42}};
  j["seeds"] = {{"shuffle", 11}};
  const ExperimentConfig c = ExperimentConfig::from_json(j);
  CHECK(c.learner == Learner::kFineTune);
  CHECK(c.capacity.mode == BufferCapacity::Mode::kBytes);
  CHECK(c.capacity.limit == 4096);
  CHECK(c.eval.interpolation == ApInterpolation::kElevenPoint);
  CHECK(c.seeds.shuffle == 11);
  CHECK(c.seeds.pq == 2);
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  const ClassSchedule s = c.schedule({1, 2, 3, 4, 5});
  CHECK(s.incremental_classes == std::vector<ClassId>{3, 4, 5});
  CHECK_THROWS_AS(c.schedule({1, 2, 3}), Error);
}

TEST_CASE("an empty schedule splits the dataset in half") {
  const ExperimentConfig c = ExperimentConfig::from_json(minimal());
  const ClassSchedule s = c.schedule({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(s.base_classes == std::vector<ClassId>{1, 2, 3, 4, 5});
  CHECK(s.incremental_classes == std::vector<ClassId>{6, 7, 8, 9, 10});
}

TEST_CASE("inline synthetic specs take the data seed") {
  Json j{{"dataset", {{"synthetic", {{"num_classes", 4}, {"seed", 99}}}}},
         {"seeds", {{"data", 17}}}};
  const ExperimentConfig c = ExperimentConfig::from_json(j);
  REQUIRE(c.synthetic.has_value());
  CHECK(c.synthetic->num_classes == 4);
  CHECK(c.synthetic->seed == 17);
}

TEST_CASE("unknown keys and bad values are rejected") {
  Json top = minimal();
  top["replay"] = 4;
  CHECK(kind_of(top) == ErrorKind::kParse);
  Json nested = minimal();
  nested["pq"] = {{"codebooks", 8}};
  CHECK(kind_of(nested) == ErrorKind::kParse);
  CHECK(kind_of(Json{{"learner", "RODEO"}}) == ErrorKind::kParse);
  CHECK(kind_of(Json::array()) == ErrorKind::kParse);

  Json both = minimal();
  both["dataset"]["synthetic"] = Json::object();
  CHECK(kind_of(both) == ErrorKind::kConfig);
  Json learner = minimal();
  learner["learner"] = "iCaRL";
  CHECK(kind_of(learner) == ErrorKind::kConfig);
  Json caps = minimal();
  caps["buffer"] = {{"capacity_entries", 3}, {"capacity_bytes", 3}};
  CHECK(kind_of(caps) == ErrorKind::kConfig);
  Json k = minimal();
  k["pq"] = {{"codebook_size", 300}};
  CHECK(kind_of(k) == ErrorKind::kConfig);
  Json n = minimal();
  n["replay_n"] = 0;
  CHECK(kind_of(n) == ErrorKind::kConfig);
  Json off = minimal();
  off["offline"] = {{"mode", "constant"}};
  CHECK(kind_of(off) == ErrorKind::kConfig);
  Json sched = minimal();
  sched["schedule"] = {{"base_classes", {1, 2}}, {"incremental_classes", {2, 3}}};
  CHECK(kind_of(sched) == ErrorKind::kConfig);
  Json type = minimal();
  type["replay_n"] = "four";
  CHECK_THROWS_AS(ExperimentConfig::from_json(type), Error);
}

TEST_CASE("relative paths resolve against the config file") {
  test::TempDir dir;
  Json j = minimal();
  j["offline"] = {{"mode", "curve"}, {"curve", "offline.csv"}};
  std::ofstream(dir.path() / "run.json") << j.dump();
  const ExperimentConfig c = read_config(dir.path() / "run.json");
  CHECK(*c.dataset_dir == dir.path() / "data");
  CHECK(c.offline.curve == dir.path() / "offline.csv");
}

TEST_CASE("master seeds derive distinct streams") {
  const Seeds a = Seeds::from_master(1);
  const Seeds b = Seeds::from_master(1);
  const Seeds c = Seeds::from_master(2);
  CHECK(a.shuffle == b.shuffle);
  CHECK(a.pq != a.buffer);
  CHECK(a.shuffle != c.shuffle);
}
