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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "streamdet/binary_io.hpp"
#include "streamdet/config.hpp"
#include "streamdet/driver.hpp"
#include "streamdet/error.hpp"
#include "streamdet/eval.hpp"
#include "streamdet/io.hpp"
#include "streamdet/pq.hpp"
#include "streamdet/rng.hpp"
#include "streamdet/synthetic.hpp"

namespace fs = std::filesystem;
using namespace streamdet;

namespace {

void report_error(const char* kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump()
            << std::endl;
}

std::vector<fs::path> files_with_extension(const fs::path& dir,
                                           const std::string& ext) {
  if (!fs::is_directory(dir)) {
    fail(ErrorKind::kIo, "'" + dir.string() + "' is not a directory");
  }
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_gen(const fs::path& spec_path, const fs::path& out,
            std::optional<std::uint64_t> seed) {
  SyntheticSpec spec =
      SyntheticSpec::from_json(read_json(spec_path), spec_path.string());
  if (seed) spec.seed = *seed;
  const Dataset data = generate_dataset(spec);
  write_dataset(data, out);
  std::cout << nlohmann::json{{"train", data.train.size()},
                              {"test", data.test.size()},
                              {"classes", data.classes}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train_pq(const fs::path& features, int s, int codebook_size,
                 std::uint64_t seed, int iters, int sample_locations,
                 const fs::path& out) {
  const auto files = files_with_extension(features, ".rfm");
  if (files.empty()) {
    fail(ErrorKind::kIo, "no .rfm files in '" + features.string() + "'");
  }
  VectorSet samples;
  for (const auto& f : files) {
    const FeatureMap fmap = read_feature(f);
    if (samples.dim == 0) samples.dim = fmap.channels;
    if (fmap.channels != samples.dim) {
      fail(ErrorKind::kParse, f.string() + ": channel count differs from " +
                                  files.front().string());
    }
    const VectorSet part =
        sample_locations > 0
            ? subsample_locations(
                  fmap,
                  std::min<int>(sample_locations,
                                static_cast<int>(fmap.cell_count())),
                  mix_seed(seed, std::hash<std::string>{}(fmap.image_id)))
            : all_locations(fmap);
    samples.data.insert(samples.data.end(), part.data.begin(), part.data.end());
  }
  const PQModel model = train_pq(samples, s, codebook_size, seed, iters);
  write_file_atomic(out, model.serialize());
  std::cout << nlohmann::json{{"vectors", samples.size()},
                              {"dim", samples.dim},
                              {"reconstruction_mse",
                               reconstruction_mse(model, samples)}}
                   .dump()
            << "\n";
  return 0;
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> learner;
  std::optional<int> replay_n;
  std::optional<std::string> policy;
  std::optional<std::size_t> capacity_entries;
  std::optional<std::size_t> capacity_bytes;
  std::optional<int> eval_every;
  std::optional<double> offline_const;
  std::optional<std::string> offline_curve;
};

int cmd_run(const fs::path& config_path, const fs::path& out,
            const RunOverrides& o) {
  ExperimentConfig config = read_config(config_path);
  if (o.seed) {
    config.seeds = Seeds::from_master(*o.seed);
    if (config.synthetic) config.synthetic->seed = config.seeds.data;
  }
  if (o.learner) config.learner = parse_learner(*o.learner);
  if (o.replay_n) config.replay_n = *o.replay_n;
  if (o.policy) config.policy = parse_policy(*o.policy);
  if (o.capacity_entries) config.capacity = BufferCapacity::entries(*o.capacity_entries);
  if (o.capacity_bytes) config.capacity = BufferCapacity::bytes(*o.capacity_bytes);
  if (o.eval_every) config.eval_every = *o.eval_every;
  if (o.offline_const) {
    config.offline.mode = OfflineSettings::Mode::kConstant;
    config.offline.constant = *o.offline_const;
  }
  if (o.offline_curve) {
    config.offline.mode = OfflineSettings::Mode::kCurve;
    config.offline.curve = fs::absolute(*o.offline_curve);
  }
  if (config.dataset_dir) config.dataset_dir = fs::absolute(*config.dataset_dir);
  config.validate();

  const Dataset data = load_experiment_data(config);
  const ExperimentResult result = run_experiment(config, data, {out, nullptr, {}});
  nlohmann::json summary{{"alphas", result.alphas},
                         {"audit_ok", result.audit.ok},
                         {"steps", result.log.steps.size()}};
  summary["omega_map"] =
      result.omega ? nlohmann::json(*result.omega) : nlohmann::json(nullptr);
  std::cout << summary.dump() << "\n";
  return result.audit.ok ? 0 : 1;
}

int cmd_eval(const fs::path& detections, const fs::path& annotations,
             const fs::path& out, const std::vector<ClassId>& class_list,
             bool apply_nms, bool eleven_point) {
  std::vector<Detection> dets =
      detections_from_json(read_json(detections), detections.string());
  if (apply_nms) dets = nms(dets);
  std::vector<ImageAnnotation> anns;
  for (const auto& f : files_with_extension(annotations, ".json")) {
    anns.push_back(read_annotation(f));
  }
  std::set<ClassId> classes(class_list.begin(), class_list.end());
  if (classes.empty()) {
    for (const auto& a : anns) {
      const auto cs = a.classes();
      classes.insert(cs.begin(), cs.end());
    }
  } else {
    for (auto& a : anns) a = a.restricted_to(classes);
  }
  const EvalReport report = evaluate(
      dets, anns, classes, 0,
      {eleven_point ? ApInterpolation::kElevenPoint : ApInterpolation::kAllPoint,
       0.5});
  write_json(out, report.to_json());
  std::cout << nlohmann::json{{"map", report.map}}.dump() << "\n";
  return 0;
}

int cmd_omega(const fs::path& curves, std::optional<double> offline_const,
              std::optional<std::string> offline_curve, int precision) {
  const std::vector<double> alphas = read_curve_maps(curves);
  double omega = 0;
  if (offline_const) {
    omega = omega_map(alphas, *offline_const);
  } else {
    omega = omega_map(alphas, read_curve_maps(*offline_curve));
  }
  std::printf("%.*f\n", precision, omega);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming incremental object detection over feature maps"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_spec, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--spec", gen_spec, "Synthetic spec JSON")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Override the spec seed");

  auto* tpq = app.add_subcommand("train-pq", "Train a product quantizer");
  std::string tpq_features, tpq_out;
  int tpq_s = 8, tpq_k = 256, tpq_iters = 25, tpq_locations = 0;
  std::uint64_t tpq_seed = 0;
  tpq->add_option("--features", tpq_features, "Directory of .rfm files")->required();
  tpq->add_option("--s", tpq_s, "Number of codebooks");
  tpq->add_option("--codebook-size", tpq_k, "Centroids per codebook");
  tpq->add_option("--seed", tpq_seed, "k-means seed");
  tpq->add_option("--iters", tpq_iters, "Lloyd iterations");
  tpq->add_option("--sample-locations", tpq_locations,
                  "Locations drawn per map (0 uses all)");
  tpq->add_option("--out", tpq_out, "Output pq.bin")->required();

  auto* run = app.add_subcommand("run", "Run a streaming experiment");
  std::string run_config, run_out;
  RunOverrides ov;
  run->add_option("--config", run_config, "Experiment config JSON")->required();
  run->add_option("--out", run_out, "Run directory")->required();
  run->add_option("--seed", ov.seed, "Master seed replacing every configured seed");
  run->add_option("--learner", ov.learner, "RODEO, FINE_TUNE or SLDA_REGRESS");
  run->add_option("--replay-n", ov.replay_n, "Images per update");
  run->add_option("--policy", ov.policy, "MIN, MAX, BAL, RANDOM or NO_REPLACE");
  auto* cap_e = run->add_option("--capacity-entries", ov.capacity_entries,
                                "Buffer capacity in entries");
  auto* cap_b = run->add_option("--capacity-bytes", ov.capacity_bytes,
                                "Buffer capacity in code bytes");
  cap_e->excludes(cap_b);
  run->add_option("--eval-every", ov.eval_every, "Increments between checkpoints");
  auto* off_c = run->add_option("--offline-const", ov.offline_const,
                                "Constant offline mAP");
  auto* off_v = run->add_option("--offline-curve", ov.offline_curve,
                                "Offline curves CSV");
  off_c->excludes(off_v);

  auto* ev = app.add_subcommand("eval", "Evaluate detections");
  std::string ev_dets, ev_anns, ev_out;
  std::vector<ClassId> ev_classes;
  bool ev_nms = false, ev_11 = false;
  ev->add_option("--detections", ev_dets, "Detections JSON")->required();
  ev->add_option("--annotations", ev_anns, "Directory of annotation JSON")->required();
  ev->add_option("--out", ev_out, "Output report.json")->required();
  ev->add_option("--classes", ev_classes, "Classes to evaluate")->delimiter(',');
  ev->add_flag("--nms", ev_nms, "Apply per-class NMS first");
  ev->add_flag("--eleven-point", ev_11, "11-point interpolated AP");

  auto* om = app.add_subcommand("omega", "Normalized incremental mAP");
  std::string om_curves;
  std::optional<double> om_const;
  std::optional<std::string> om_curve;
  int om_precision = 3;
  om->add_option("--curves", om_curves, "Learner curves CSV")->required();
  auto* om_c = om->add_option("--offline-const", om_const, "Constant offline mAP");
  auto* om_v = om->add_option("--offline-curve", om_curve, "Offline curves CSV");
  om_c->excludes(om_v);
  om->add_option("--precision", om_precision, "Printed decimals");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_gen(gen_spec, gen_out, gen_seed);
    if (*tpq) {
      return cmd_train_pq(tpq_features, tpq_s, tpq_k, tpq_seed, tpq_iters,
                          tpq_locations, tpq_out);
    }
    if (*run) return cmd_run(run_config, run_out, ov);
    if (*ev) return cmd_eval(ev_dets, ev_anns, ev_out, ev_classes, ev_nms, ev_11);
    if (*om) {
      if (!om_const && !om_curve) {
        report_error("usage", "omega needs --offline-const or --offline-curve");
        return 2;
      }
      return cmd_omega(om_curves, om_const, om_curve, om_precision);
    }
  } catch (const Error& e) {
    report_error(to_string(e.kind()), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 0;
}
