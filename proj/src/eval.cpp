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

#include "streamdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "streamdet/binary_io.hpp"
#include "streamdet/error.hpp"

namespace streamdet {

namespace {

// Higher score first; ties by box coordinates, class, then image id.
bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box != b.box) return a.box < b.box;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  return a.image_id < b.image_id;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh,
                           std::size_t max_out) {
  std::map<ImageId, std::map<ClassId, std::vector<Detection>>> groups;
  for (const auto& d : dets) {
    if (!std::isfinite(d.score)) {
      fail(ErrorKind::kDomain, "nms over a non-finite score");
    }
    groups[d.image_id][d.class_id].push_back(d);
  }
  std::vector<Detection> out;
  for (auto& [image, by_class] : groups) {
    std::vector<Detection> kept;
    for (auto& [cls, cands] : by_class) {
      std::sort(cands.begin(), cands.end(), ranks_before);
      std::vector<char> removed(cands.size(), 0);
      for (std::size_t i = 0; i < cands.size(); ++i) {
        if (removed[i]) continue;
        kept.push_back(cands[i]);
        for (std::size_t j = i + 1; j < cands.size(); ++j) {
          if (!removed[j] && iou(cands[i].box, cands[j].box) > iou_thresh) {
            removed[j] = 1;
          }
        }
      }
    }
    std::sort(kept.begin(), kept.end(), ranks_before);
    if (kept.size() > max_out) kept.resize(max_out);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

std::optional<double> average_precision(std::span<const Detection> dets,
                                        std::span<const GroundTruthBox> gts,
                                        ApInterpolation mode,
                                        double match_iou) {
  if (gts.empty()) return std::nullopt;
  std::map<ImageId, std::vector<std::size_t>> by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    by_image[gts[g].image_id].push_back(g);
  }
  std::vector<Detection> sorted(dets.begin(), dets.end());
  std::sort(sorted.begin(), sorted.end(), ranks_before);

  std::vector<char> claimed(gts.size(), 0);
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& d = sorted[i];
    std::optional<std::size_t> best;
    double best_iou = -1;
    if (auto it = by_image.find(d.image_id); it != by_image.end()) {
      for (std::size_t g : it->second) {
        if (claimed[g]) continue;
        const double o = iou(d.box, gts[g].box);
        if (o > best_iou) {
          best_iou = o;
          best = g;
        }
      }
    }
    if (best && best_iou >= match_iou) {
      claimed[*best] = 1;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }

  if (mode == ApInterpolation::kElevenPoint) {
    double ap = 0;
    for (int k = 0; k <= 10; ++k) {
      const double t = k / 10.0;
      double p = 0;
      for (std::size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] >= t - 1e-12) p = std::max(p, precision[i]);
      }
      ap += p / 11.0;
    }
    return ap;
  }

  // Precision envelope, then the exact area under the step curve.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json ap = nlohmann::json::object();
  for (const auto& [c, v] : per_class_ap) ap[std::to_string(c)] = v;
  return {{"t", t},
          {"map", map},
          {"per_class_ap", std::move(ap)},
          {"classes_evaluated", classes_evaluated},
          {"classes_without_gt", classes_without_gt}};
}

EvalReport evaluate(std::span<const Detection> dets,
                    std::span<const ImageAnnotation> annotations,
                    const std::set<ClassId>& classes, int t,
                    const EvalOptions& options) {
  std::map<ClassId, std::vector<GroundTruthBox>> gts;
  for (const auto& ann : annotations) {
    for (const auto& b : ann.boxes) {
      if (!classes.contains(b.class_id)) {
        fail(ErrorKind::kPrecondition,
             "ground truth of class " + std::to_string(b.class_id) + " in '" +
                 ann.image_id + "' is outside the evaluated classes");
      }
      gts[b.class_id].push_back({ann.image_id, b.box});
    }
  }
  std::map<ClassId, std::vector<Detection>> by_class;
  for (const auto& d : dets) {
    if (classes.contains(d.class_id)) by_class[d.class_id].push_back(d);
  }
  EvalReport report;
  report.t = t;
  for (ClassId c : classes) {
    auto ap = average_precision(by_class[c], gts[c], options.interpolation,
                                options.match_iou);
    if (!ap) {
      report.classes_without_gt.push_back(c);
      continue;
    }
    report.per_class_ap[c] = *ap;
    report.classes_evaluated.insert(c);
  }
  double sum = 0;
  for (const auto& [c, ap] : report.per_class_ap) sum += ap;
  report.map = report.per_class_ap.empty()
                   ? 0.0
                   : sum / static_cast<double>(report.per_class_ap.size());
  return report;
}

double omega_map(std::span<const double> alphas,
                 std::span<const double> offline) {
  if (alphas.empty()) fail(ErrorKind::kDomain, "omega over no checkpoints");
  if (alphas.size() != offline.size()) {
    fail(ErrorKind::kDomain, "omega needs one offline value per checkpoint (" +
                                 std::to_string(alphas.size()) + " vs " +
                                 std::to_string(offline.size()) + ")");
  }
  double sum = 0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(offline[i] > 0)) {
      fail(ErrorKind::kDomain, "offline mAP must be positive");
    }
    sum += alphas[i] / offline[i];
  }
  return sum / static_cast<double>(alphas.size());
}

double omega_map(std::span<const double> alphas, double offline_constant) {
  std::vector<double> offline(alphas.size(), offline_constant);
  return omega_map(alphas, offline);
}

std::string curves_csv(std::span<const EvalReport> reports,
                       std::span<const ClassId> classes) {
  std::ostringstream out;
  out.precision(17);
  out << "t,map";
  for (ClassId c : classes) out << ",ap_" << c;
  out << "\n";
  for (const auto& r : reports) {
    out << r.t << "," << r.map;
    for (ClassId c : classes) {
      out << ",";
      if (auto it = r.per_class_ap.find(c); it != r.per_class_ap.end()) {
        out << it->second;
      }
    }
    out << "\n";
  }
  return out.str();
}

std::vector<double> parse_curve_maps(const std::string& text,
                                     const std::string& context) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorKind::kParse, context + ": empty curve file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  const auto col = std::find(header.begin(), header.end(), "map");
  if (col == header.end()) {
    fail(ErrorKind::kParse, context + ": header has no \"map\" column");
  }
  const auto index = static_cast<std::size_t>(col - header.begin());
  std::vector<double> maps;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      fail(ErrorKind::kParse, context + ": row " + std::to_string(row) +
                                  " has " + std::to_string(cells.size()) +
                                  " cells, header has " +
                                  std::to_string(header.size()));
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(cells[index], &used);
      if (used != cells[index].size()) throw std::invalid_argument("tail");
      maps.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorKind::kParse, context + ": row " + std::to_string(row) +
                                  " has a non-numeric map value");
    }
  }
  if (maps.empty()) fail(ErrorKind::kParse, context + ": no data rows");
  return maps;
}

std::vector<double> read_curve_maps(const std::filesystem::path& path) {
  return parse_curve_maps(read_file_text(path), path.string());
}

}  // namespace streamdet
