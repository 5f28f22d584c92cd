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

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "streamdet/binary_io.hpp"
#include "streamdet/io.hpp"
#include "test_util.hpp"

using namespace streamdet;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string("'") + STREAMDET_CLI_PATH + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file_text(out);
  r.err = read_file_text(err);
  return r;
}

void write_curve(const fs::path& p, const std::vector<double>& maps) {
  std::ofstream f(p);
  f << "t,map\n";
  for (std::size_t i = 0; i < maps.size(); ++i) f << i << "," << maps[i] << "\n";
}

}  // namespace

TEST_CASE("omega prints the normalized metric") {
  test::TempDir dir;
  write_curve(dir.path() / "slda.csv", {0.351, 0.300, 0.260, 0.233, 0.233});
  const auto c = run_cli("omega --curves '" + (dir.path() / "slda.csv").string() +
                             "' --offline-const 0.42",
                         dir.path());
  CHECK(c.exit_code == 0);
  CHECK(c.out == "0.656\n");

  write_curve(dir.path() / "ft.csv", {0.709, 0.270, 0.277, 0.263, 0.253, 0.240,
                                      0.228, 0.220, 0.208, 0.201, 0.196});
  write_curve(dir.path() / "off.csv", {0.711, 0.726, 0.730, 0.737, 0.740, 0.746,
                                       0.716, 0.716, 0.721, 0.716, 0.715});
  const auto v = run_cli("omega --curves '" + (dir.path() / "ft.csv").string() +
                             "' --offline-curve '" + (dir.path() / "off.csv").string() +
                             "'",
                         dir.path());
  CHECK(v.exit_code == 0);
  CHECK(v.out == "0.385\n");
  const auto p = run_cli("omega --precision 5 --curves '" +
                             (dir.path() / "ft.csv").string() + "' --offline-curve '" +
                             (dir.path() / "off.csv").string() + "'",
                         dir.path());
  CHECK(p.out == "0.38528\n");
}

TEST_CASE("errors are reported as JSON with distinct exit codes") {
  test::TempDir dir;
  const auto usage = run_cli("omega --curves x.csv", dir.path());
  CHECK(usage.exit_code == 2);
  CHECK(nlohmann::json::parse(usage.err).at("error") == "usage");

  const auto unknown = run_cli("frobnicate", dir.path());
  CHECK(unknown.exit_code == 2);

  const auto missing = run_cli("omega --curves '" + (dir.path() / "nope.csv").string() +
                                   "' --offline-const 0.4",
                               dir.path());
  CHECK(missing.exit_code == 1);
  const auto j = nlohmann::json::parse(missing.err);
  CHECK(j.at("error") == "io");
  CHECK(j.at("message").get<std::string>().find("nope.csv") != std::string::npos);

  write_curve(dir.path() / "a.csv", {0.5, 0.5});
  const auto domain = run_cli("omega --curves '" + (dir.path() / "a.csv").string() +
                                  "' --offline-const 0",
                              dir.path());
  CHECK(domain.exit_code == 1);
  CHECK(nlohmann::json::parse(domain.err).at("error") == "domain");
}

TEST_CASE("gen, train-pq, run and eval work end to end") {
  test::TempDir dir;
  const fs::path spec = dir.path() / "spec.json";
  write_json(spec, {{"num_classes", 4}, {"images_per_class", 8}, {"channels", 8},
                    {"proposals_per_image", 24}});
  const fs::path data = dir.path() / "data";
  const auto g = run_cli("gen --spec '" + spec.string() + "' --out '" + data.string() +
                             "' --seed 4",
                         dir.path());
  REQUIRE(g.exit_code == 0);
  CHECK(nlohmann::json::parse(g.out).at("train") == 28);
  CHECK(fs::exists(data / "split.json"));

  const auto t = run_cli("train-pq --features '" + (data / "features").string() +
                             "' --s 4 --codebook-size 8 --iters 3 --out '" +
                             (dir.path() / "pq.bin").string() + "'",
                         dir.path());
  REQUIRE(t.exit_code == 0);
  CHECK(nlohmann::json::parse(t.out).at("dim") == 8);
  CHECK(read_file_bytes(dir.path() / "pq.bin").size() > 4);

  const fs::path config = dir.path() / "run.json";
  write_json(config, {{"dataset", {{"path", "data"}}},
                      {"pq", {{"num_codebooks", 4}, {"codebook_size", 8}, {"iters", 3}}},
                      {"head", {{"hidden", 8}}},
                      {"base_epochs", 1},
                      {"buffer", {{"capacity_entries", 10}}}});
  const fs::path out = dir.path() / "out";
  const auto r = run_cli("run --config '" + config.string() + "' --out '" + out.string() +
                             "' --seed 3 --policy BAL --offline-const 0.5",
                         dir.path());
  REQUIRE(r.exit_code == 0);
  const auto summary = nlohmann::json::parse(r.out);
  CHECK(summary.at("audit_ok") == true);
  CHECK(summary.at("alphas").size() == 3);
  CHECK(summary.at("omega_map").is_number());
  const auto report = read_json(out / "report.json");
  CHECK(report.at("policy") == "BAL");

  const auto o = run_cli("omega --curves '" + (out / "curves.csv").string() +
                             "' --offline-const 0.5 --precision 6",
                         dir.path());
  CHECK(o.exit_code == 0);
  CHECK(std::stod(o.out) ==
        doctest::Approx(summary.at("omega_map").get<double>()).epsilon(1e-5));

  const fs::path dets = dir.path() / "dets.json";
  std::vector<Detection> none;
  write_json(dets, detections_to_json(none));
  const auto e = run_cli("eval --detections '" + dets.string() + "' --annotations '" +
                             (data / "annotations").string() + "' --classes 1,2 --out '" +
                             (dir.path() / "eval.json").string() + "'",
                         dir.path());
  CHECK(e.exit_code == 0);
  CHECK(nlohmann::json::parse(e.out).at("map") == 0.0);
}
