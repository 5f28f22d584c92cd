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

#include "streamdet/config.hpp"

#include <cmath>

#include "streamdet/error.hpp"
#include "streamdet/io.hpp"
#include "streamdet/rng.hpp"

namespace streamdet {

namespace {

template <typename T>
void opt(const Json& j, const char* key, T& field, const std::string& ctx) {
  if (j.contains(key)) field = json_field<T>(j, key, ctx);
}

const Json& section(const Json& j, const char* key, const std::string& ctx) {
  const Json& s = j.at(key);
  if (!s.is_object()) throw_parse_type(ctx, key);
  return s;
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::kConfig, "config: " + what);
}

const char* offline_mode_name(OfflineSettings::Mode m) {
  switch (m) {
    case OfflineSettings::Mode::kNone: return "none";
    case OfflineSettings::Mode::kConstant: return "constant";
    case OfflineSettings::Mode::kCurve: return "curve";
    case OfflineSettings::Mode::kRetrain: return "retrain";
  }
  return "none";
}

}  // namespace

const char* to_string(Learner l) {
  switch (l) {
    case Learner::kRodeo: return "RODEO";
    case Learner::kFineTune: return "FINE_TUNE";
    case Learner::kSldaRegress: return "SLDA_REGRESS";
  }
  return "?";
}

Learner parse_learner(const std::string& name) {
  if (name == "RODEO") return Learner::kRodeo;
  if (name == "FINE_TUNE") return Learner::kFineTune;
  if (name == "SLDA_REGRESS") return Learner::kSldaRegress;
  fail(ErrorKind::kConfig, "unknown learner '" + name +
                               "' (expected RODEO, FINE_TUNE or SLDA_REGRESS)");
}

Seeds Seeds::from_master(std::uint64_t master) {
  return {mix_seed(master, 1), mix_seed(master, 2), mix_seed(master, 3),
          mix_seed(master, 4), mix_seed(master, 5)};
}

void ExperimentConfig::validate() const {
  require(dataset_dir.has_value() != synthetic.has_value(),
          "exactly one of dataset.path and dataset.synthetic is required");
  if (synthetic) synthetic->validate();
  require(eval_every >= 1, "eval_every must be >= 1");
  require(replay_n >= 1, "replay_n must be >= 1");
  if (learner == Learner::kRodeo && policy != ReplacementPolicy::kNoReplace) {
    require(capacity.limit > 0, "buffer capacity must be positive");
  }
  require(pq.num_codebooks >= 1, "pq.num_codebooks must be >= 1");
  require(pq.codebook_size >= 1 && pq.codebook_size <= 256,
          "pq.codebook_size must lie in [1, 256]");
  require(pq.iters >= 1, "pq.iters must be >= 1");
  require(pq.sample_locations >= 0, "pq.sample_locations must be >= 0");
  require(head.hidden >= 1, "head.hidden must be >= 1");
  require(head.bins.rows >= 1 && head.bins.cols >= 1,
          "head pool bins must be positive");
  require(sgd.learning_rate > 0 && std::isfinite(sgd.learning_rate),
          "sgd.learning_rate must be positive");
  require(sgd.momentum >= 0 && sgd.momentum < 1,
          "sgd.momentum must lie in [0, 1)");
  require(sgd.weight_decay >= 0, "sgd.weight_decay must be >= 0");
  require(targets.batch_boxes >= 1, "targets.batch_boxes must be >= 1");
  require(targets.positive_fraction >= 0 && targets.positive_fraction <= 1,
          "targets.positive_fraction must lie in [0, 1]");
  require(targets.iou_foreground > 0 && targets.iou_foreground < 1,
          "targets.iou_foreground must lie in (0, 1)");
  require(eval.nms_iou > 0 && eval.nms_iou <= 1, "eval.nms_iou must lie in (0, 1]");
  require(eval.max_detections >= 1, "eval.max_detections must be >= 1");
  require(eval.min_score >= 0 && eval.min_score < 1,
          "eval.min_score must lie in [0, 1)");
  require(slda.slda_shrinkage > 0 && slda.slda_shrinkage <= 1,
          "slda.slda_shrinkage must lie in (0, 1]");
  require(slda.regress_shrinkage > 0 && slda.regress_shrinkage <= 1,
          "slda.regress_shrinkage must lie in (0, 1]");
  require(base_epochs >= 1, "base_epochs must be >= 1");
  require(offline_batch_images >= 1, "offline_batch_images must be >= 1");
  if (offline.mode == OfflineSettings::Mode::kConstant) {
    require(offline.constant > 0, "offline.constant must be positive");
  }
  if (offline.mode == OfflineSettings::Mode::kCurve) {
    require(!offline.curve.empty(), "offline.curve must name a file");
  }
  if (!base_classes.empty() || !incremental_classes.empty()) {
    ClassSchedule{base_classes, incremental_classes, eval_every}.validate();
  }
}

ClassSchedule ExperimentConfig::schedule(
    const std::vector<ClassId>& classes) const {
  if (base_classes.empty() && incremental_classes.empty()) {
    return ClassSchedule::half_split(classes, eval_every);
  }
  ClassSchedule s{base_classes, incremental_classes, eval_every};
  s.validate();
  const std::set<ClassId> have(classes.begin(), classes.end());
  for (ClassId c : s.all_classes()) {
    if (!have.contains(c)) {
      fail(ErrorKind::kConfig, "scheduled class " + std::to_string(c) +
                                   " does not occur in the dataset");
    }
  }
  return s;
}

Json ExperimentConfig::to_json() const {
  Json dataset;
  if (dataset_dir) dataset["path"] = dataset_dir->string();
  if (synthetic) dataset["synthetic"] = synthetic->to_json();
  Json buffer{{"policy", streamdet::to_string(policy)}};
  buffer[capacity.mode == BufferCapacity::Mode::kEntries ? "capacity_entries"
                                                          : "capacity_bytes"] =
      capacity.limit;
  Json off{{"mode", offline_mode_name(offline.mode)}};
  if (offline.mode == OfflineSettings::Mode::kConstant) {
    off["constant"] = offline.constant;
  }
  if (offline.mode == OfflineSettings::Mode::kCurve) {
    off["curve"] = offline.curve.string();
  }
  return {
      {"learner", streamdet::to_string(learner)},
      {"dataset", dataset},
      {"schedule",
       {{"base_classes", base_classes},
        {"incremental_classes", incremental_classes},
        {"eval_every", eval_every}}},
      {"replay_n", replay_n},
      {"buffer", buffer},
      {"pq",
       {{"num_codebooks", pq.num_codebooks},
        {"codebook_size", pq.codebook_size},
        {"iters", pq.iters},
        {"sample_locations", pq.sample_locations}}},
      {"head",
       {{"hidden", head.hidden},
        {"pool_rows", head.bins.rows},
        {"pool_cols", head.bins.cols}}},
      {"sgd",
       {{"learning_rate", sgd.learning_rate},
        {"momentum", sgd.momentum},
        {"weight_decay", sgd.weight_decay}}},
      {"targets",
       {{"batch_boxes", targets.batch_boxes},
        {"positive_fraction", targets.positive_fraction},
        {"iou_foreground", targets.iou_foreground}}},
      {"eval",
       {{"nms_iou", eval.nms_iou},
        {"max_detections", eval.max_detections},
        {"min_score", eval.min_score},
        {"interpolation", eval.interpolation == ApInterpolation::kAllPoint
                              ? "all_point"
                              : "11_point"}}},
      {"slda",
       {{"slda_shrinkage", slda.slda_shrinkage},
        {"regress_shrinkage", slda.regress_shrinkage}}},
      {"base_epochs", base_epochs},
      {"offline_batch_images", offline_batch_images},
      {"seeds",
       {{"shuffle", seeds.shuffle},
        {"pq", seeds.pq},
        {"buffer", seeds.buffer},
        {"head_init", seeds.head_init},
        {"data", seeds.data}}},
      {"offline", off},
  };
}

ExperimentConfig ExperimentConfig::from_json(const Json& j,
                                             const std::string& ctx) {
  if (!j.is_object()) fail(ErrorKind::kParse, ctx + ": expected an object");
  require_keys(j,
               {"learner", "dataset", "schedule", "replay_n", "buffer", "pq",
                "head", "sgd", "targets", "eval", "slda", "base_epochs",
                "offline_batch_images", "seeds", "offline"},
               ctx);
  ExperimentConfig c;
  if (j.contains("learner")) {
    c.learner = parse_learner(json_field<std::string>(j, "learner", ctx));
  }
  if (j.contains("seeds")) {
    const std::string sc = ctx + ".seeds";
    const Json& s = section(j, "seeds", ctx);
    require_keys(s, {"shuffle", "pq", "buffer", "head_init", "data"}, sc);
    opt(s, "shuffle", c.seeds.shuffle, sc);
    opt(s, "pq", c.seeds.pq, sc);
    opt(s, "buffer", c.seeds.buffer, sc);
    opt(s, "head_init", c.seeds.head_init, sc);
    opt(s, "data", c.seeds.data, sc);
  }
  if (!j.contains("dataset")) throw_parse_missing(ctx, "dataset");
  {
    const std::string dc = ctx + ".dataset";
    const Json& d = section(j, "dataset", ctx);
    require_keys(d, {"path", "synthetic"}, dc);
    if (d.contains("path")) {
      c.dataset_dir = json_field<std::string>(d, "path", dc);
    }
    if (d.contains("synthetic")) {
      c.synthetic =
          SyntheticSpec::from_json(section(d, "synthetic", dc), dc + ".synthetic");
      c.synthetic->seed = c.seeds.data;
    }
  }
  if (j.contains("schedule")) {
    const std::string sc = ctx + ".schedule";
    const Json& s = section(j, "schedule", ctx);
    require_keys(s, {"base_classes", "incremental_classes", "eval_every"}, sc);
    opt(s, "base_classes", c.base_classes, sc);
    opt(s, "incremental_classes", c.incremental_classes, sc);
    opt(s, "eval_every", c.eval_every, sc);
  }
  opt(j, "replay_n", c.replay_n, ctx);
  if (j.contains("buffer")) {
    const std::string bc = ctx + ".buffer";
    const Json& b = section(j, "buffer", ctx);
    require_keys(b, {"policy", "capacity_entries", "capacity_bytes"}, bc);
    if (b.contains("policy")) {
      c.policy = parse_policy(json_field<std::string>(b, "policy", bc));
    }
    if (b.contains("capacity_entries") && b.contains("capacity_bytes")) {
      fail(ErrorKind::kConfig,
           bc + ": capacity_entries and capacity_bytes are exclusive");
    }
    if (b.contains("capacity_entries")) {
      c.capacity = BufferCapacity::entries(
          json_field<std::size_t>(b, "capacity_entries", bc));
    }
    if (b.contains("capacity_bytes")) {
      c.capacity =
          BufferCapacity::bytes(json_field<std::size_t>(b, "capacity_bytes", bc));
    }
  }
  if (j.contains("pq")) {
    const std::string pc = ctx + ".pq";
    const Json& p = section(j, "pq", ctx);
    require_keys(p, {"num_codebooks", "codebook_size", "iters", "sample_locations"},
                 pc);
    opt(p, "num_codebooks", c.pq.num_codebooks, pc);
    opt(p, "codebook_size", c.pq.codebook_size, pc);
    opt(p, "iters", c.pq.iters, pc);
    opt(p, "sample_locations", c.pq.sample_locations, pc);
  }
  if (j.contains("head")) {
    const std::string hc = ctx + ".head";
    const Json& h = section(j, "head", ctx);
    require_keys(h, {"hidden", "pool_rows", "pool_cols"}, hc);
    opt(h, "hidden", c.head.hidden, hc);
    opt(h, "pool_rows", c.head.bins.rows, hc);
    opt(h, "pool_cols", c.head.bins.cols, hc);
  }
  if (j.contains("sgd")) {
    const std::string sc = ctx + ".sgd";
    const Json& s = section(j, "sgd", ctx);
    require_keys(s, {"learning_rate", "momentum", "weight_decay"}, sc);
    opt(s, "learning_rate", c.sgd.learning_rate, sc);
    opt(s, "momentum", c.sgd.momentum, sc);
    opt(s, "weight_decay", c.sgd.weight_decay, sc);
  }
  if (j.contains("targets")) {
    const std::string tc = ctx + ".targets";
    const Json& t = section(j, "targets", ctx);
    require_keys(t, {"batch_boxes", "positive_fraction", "iou_foreground"}, tc);
    opt(t, "batch_boxes", c.targets.batch_boxes, tc);
    opt(t, "positive_fraction", c.targets.positive_fraction, tc);
    opt(t, "iou_foreground", c.targets.iou_foreground, tc);
  }
  if (j.contains("eval")) {
    const std::string ec = ctx + ".eval";
    const Json& e = section(j, "eval", ctx);
    require_keys(e, {"nms_iou", "max_detections", "min_score", "interpolation"},
                 ec);
    opt(e, "nms_iou", c.eval.nms_iou, ec);
    opt(e, "max_detections", c.eval.max_detections, ec);
    opt(e, "min_score", c.eval.min_score, ec);
    if (e.contains("interpolation")) {
      const auto mode = json_field<std::string>(e, "interpolation", ec);
      if (mode == "all_point") {
        c.eval.interpolation = ApInterpolation::kAllPoint;
      } else if (mode == "11_point") {
        c.eval.interpolation = ApInterpolation::kElevenPoint;
      } else {
        fail(ErrorKind::kConfig, ec + ": interpolation must be all_point or 11_point");
      }
    }
  }
  if (j.contains("slda")) {
    const std::string sc = ctx + ".slda";
    const Json& s = section(j, "slda", ctx);
    require_keys(s, {"slda_shrinkage", "regress_shrinkage"}, sc);
    opt(s, "slda_shrinkage", c.slda.slda_shrinkage, sc);
    opt(s, "regress_shrinkage", c.slda.regress_shrinkage, sc);
  }
  opt(j, "base_epochs", c.base_epochs, ctx);
  opt(j, "offline_batch_images", c.offline_batch_images, ctx);
  if (j.contains("offline")) {
    const std::string oc = ctx + ".offline";
    const Json& o = section(j, "offline", ctx);
    require_keys(o, {"mode", "constant", "curve"}, oc);
    const auto mode = o.contains("mode") ? json_field<std::string>(o, "mode", oc)
                                         : std::string("none");
    if (mode == "none") {
      c.offline.mode = OfflineSettings::Mode::kNone;
    } else if (mode == "constant") {
      c.offline.mode = OfflineSettings::Mode::kConstant;
    } else if (mode == "curve") {
      c.offline.mode = OfflineSettings::Mode::kCurve;
    } else if (mode == "retrain") {
      c.offline.mode = OfflineSettings::Mode::kRetrain;
    } else {
      fail(ErrorKind::kConfig,
           oc + ": mode must be none, constant, curve or retrain");
    }
    opt(o, "constant", c.offline.constant, oc);
    if (o.contains("curve")) c.offline.curve = json_field<std::string>(o, "curve", oc);
  }
  c.validate();
  return c;
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  ExperimentConfig c = ExperimentConfig::from_json(read_json(path), path.string());
  const auto base = path.parent_path();
  if (c.dataset_dir && c.dataset_dir->is_relative()) {
    c.dataset_dir = base / *c.dataset_dir;
  }
  if (!c.offline.curve.empty() && c.offline.curve.is_relative()) {
    c.offline.curve = base / c.offline.curve;
  }
  return c;
}

}  // namespace streamdet
