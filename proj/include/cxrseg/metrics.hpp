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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxrseg/mask.hpp"

namespace cxrseg {

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Positive class is 1 (foreground / covid).
ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

struct SegMetrics {
  double accuracy = 0.0;
  double iou = 0.0;
  double dsc = 0.0;
};

/// IoU and DSC are 1 when prediction and ground truth are both empty.
SegMetrics seg_metrics(const ConfusionCounts& c);

/// Metrics with a zero denominator are left empty rather than thrown.
struct DetMetrics {
  std::optional<double> accuracy, precision, sensitivity, f1, specificity;
};

DetMetrics det_metrics(const ConfusionCounts& c);

struct CIParams {
  std::size_t n = 1;  // number of test samples
  double z = 1.96;
};

/// Half-width z * sqrt(m (1 - m) / n) of the normal-approximation interval.
double confidence_radius(double metric, const CIParams& p);

enum class Task { lung_segmentation, infection_segmentation, detection };
enum class Averaging { micro, macro };

std::string task_name(Task task);
Task parse_task(const std::string& name);

struct MetricEntry {
  std::string name;
  std::optional<double> value;
  double radius = 0.0;
};

struct MetricsReport {
  Task task = Task::lung_segmentation;
  std::string model;
  std::string encoder;
  std::size_t n = 0;
  Averaging averaging = Averaging::micro;
  ConfusionCounts counts;
  std::vector<MetricEntry> metrics;

  const MetricEntry& metric(const std::string& name) const;
};

/// Segmentation: confusion over all pixels of all samples (micro) or mean of
/// per-image metrics (macro). CI population is the sample count.
MetricsReport evaluate_run(const std::map<std::string, BinaryMask>& pred, const std::map<std::string, BinaryMask>& gt,
                           Task task, Averaging averaging = Averaging::micro, double z = 1.96);

/// Detection: confusion over samples, label 1 = positive.
MetricsReport evaluate_run(const std::map<std::string, std::uint8_t>& pred,
                           const std::map<std::string, std::uint8_t>& gt, double z = 1.96);

nlohmann::json to_json(const MetricsReport& report);

/// Aligned text table in the layout of the published result tables:
/// one row per report, "value ± radius" cells in percent with 2 decimals.
std::string format_table(const std::vector<MetricsReport>& reports);

}  // namespace cxrseg
