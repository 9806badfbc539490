// Copyright 2026 The cxrseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "cxrseg/metrics.hpp"

namespace cxrseg {

std::string task_name(Task task) {
  switch (task) {
    case Task::lung_segmentation:
      return "lung";
    case Task::infection_segmentation:
      return "infection";
    case Task::detection:
      return "detection";
  }
  return "unknown";
}

Task parse_task(const std::string& name) {
  if (name == "lung") return Task::lung_segmentation;
  if (name == "infection") return Task::infection_segmentation;
  if (name == "detection") return Task::detection;
  throw ConfigError("unknown task '" + name + "' (expected lung, infection or detection)");
}

const MetricEntry& MetricsReport::metric(const std::string& name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return m;
  }
  throw NotFoundError("report has no metric '" + name + "'");
}

namespace {

template <typename V>
void check_alignment(const std::map<std::string, V>& pred, const std::map<std::string, V>& gt) {
  std::vector<std::string> bad;
  for (const auto& [id, _] : pred) {
    if (!gt.count(id)) bad.push_back(id);
  }
  for (const auto& [id, _] : gt) {
    if (!pred.count(id)) bad.push_back(id);
  }
  if (!bad.empty()) {
    std::string msg = "prediction and ground-truth ids differ:";
    for (const auto& id : bad) msg += " " + id;
    throw AlignmentError(msg, bad);
  }
  if (gt.empty()) throw UsageError("evaluate_run: no samples");
}

MetricEntry entry(const std::string& name, std::optional<double> value, std::size_t n, double z) {
  MetricEntry e{name, value, 0.0};
  if (value) e.radius = confidence_radius(std::clamp(*value, 0.0, 1.0), CIParams{n, z});
  return e;
}

}  // namespace

MetricsReport evaluate_run(const std::map<std::string, BinaryMask>& pred, const std::map<std::string, BinaryMask>& gt,
                           Task task, Averaging averaging, double z) {
  if (task == Task::detection) throw UsageError("evaluate_run: masks given for the detection task");
  check_alignment(pred, gt);
  MetricsReport r;
  r.task = task;
  r.n = gt.size();
  r.averaging = averaging;
  SegMetrics mean{};
  for (const auto& [id, g] : gt) {
    const ConfusionCounts c = confusion(pred.at(id), g);
    r.counts += c;
    if (averaging == Averaging::macro) {
      const SegMetrics m = seg_metrics(c);
      mean.accuracy += m.accuracy;
      mean.iou += m.iou;
      mean.dsc += m.dsc;
    }
  }
  SegMetrics m;
  if (averaging == Averaging::micro) {
    m = seg_metrics(r.counts);
  } else {
    const auto n = static_cast<double>(r.n);
    m = {mean.accuracy / n, mean.iou / n, mean.dsc / n};
  }
  r.metrics = {entry("accuracy", m.accuracy, r.n, z), entry("iou", m.iou, r.n, z), entry("dsc", m.dsc, r.n, z)};
  return r;
}

MetricsReport evaluate_run(const std::map<std::string, std::uint8_t>& pred,
                           const std::map<std::string, std::uint8_t>& gt, double z) {
  check_alignment(pred, gt);
  std::vector<std::uint8_t> p, g;
  for (const auto& [id, label] : gt) {
    g.push_back(label);
    p.push_back(pred.at(id));
  }
  MetricsReport r;
  r.task = Task::detection;
  r.n = gt.size();
  r.counts = confusion(p, g);
  const DetMetrics m = det_metrics(r.counts);
  r.metrics = {entry("accuracy", m.accuracy, r.n, z), entry("precision", m.precision, r.n, z),
               entry("sensitivity", m.sensitivity, r.n, z), entry("f1", m.f1, r.n, z),
               entry("specificity", m.specificity, r.n, z)};
  return r;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["task"] = task_name(report.task);
  j["model"] = report.model;
  j["encoder"] = report.encoder;
  j["n"] = report.n;
  j["averaging"] = report.averaging == Averaging::micro ? "micro" : "macro";
  j["counts"] = {{"tp", report.counts.tp}, {"tn", report.counts.tn}, {"fp", report.counts.fp}, {"fn", report.counts.fn}};
  for (const auto& m : report.metrics) {
    j["metrics"][m.name] = m.value ? nlohmann::json{{"value", *m.value}, {"radius", m.radius}}
                                   : nlohmann::json{{"value", nullptr}, {"radius", nullptr}};
  }
  return j;
}

namespace {

std::string cell(const MetricEntry& m) {
  if (!m.value) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", *m.value * 100.0, m.radius * 100.0);
  return buf;
}

// Display width; "±" is two bytes in UTF-8.
std::size_t width_of(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char ch : s) {
    if ((ch & 0xC0) != 0x80) ++w;
  }
  return w;
}

}  // namespace

std::string format_table(const std::vector<MetricsReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Task", "Model", "Encoder"};
  if (!reports.empty()) {
    for (const auto& m : reports.front().metrics) header.push_back(m.name);
  }
  rows.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> row = {task_name(r.task), r.model, r.encoder};
    for (const auto& m : r.metrics) row.push_back(cell(m));
    rows.push_back(row);
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size() && i < widths.size(); ++i) widths[i] = std::max(widths[i], width_of(row[i]));
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size() && i < widths.size(); ++i) {
      out << row[i];
      if (i + 1 < row.size()) out << std::string(widths[i] - width_of(row[i]) + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace cxrseg
