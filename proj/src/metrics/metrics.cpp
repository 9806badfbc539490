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

#include <cmath>

#include "cxrseg/metrics.hpp"

namespace cxrseg {

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(gt.size()) + " labels");
  }
  // Index by (pred, gt) so the loop has no branches.
  std::uint64_t cell[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < pred.size(); ++i) ++cell[pred[i] ? 1 : 0][gt[i] ? 1 : 0];
  ConfusionCounts c;
  c.tp = cell[1][1];
  c.fp = cell[1][0];
  c.fn = cell[0][1];
  c.tn = cell[0][0];
  return c;
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_dims(gt)) throw DimensionError("confusion: mask dimensions differ");
  return confusion(std::span<const std::uint8_t>(pred.values()), std::span<const std::uint8_t>(gt.values()));
}

SegMetrics seg_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw UsageError("seg_metrics: empty population");
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn);
  SegMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp + c.fn == 0) {
    m.iou = 1.0;
    m.dsc = 1.0;
  } else {
    m.iou = tp / (tp + fp + fn);
    m.dsc = 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return m;
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

DetMetrics det_metrics(const ConfusionCounts& c) {
  DetMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  // Harmonic mean of precision and sensitivity, in count form so that it is
  // 0 rather than undefined when there are predictions or positives but no hits.
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

double confidence_radius(double metric, const CIParams& p) {
  if (!(metric >= 0.0 && metric <= 1.0)) throw UsageError("confidence_radius: metric must lie in [0,1]");
  if (p.n == 0) throw UsageError("confidence_radius: n must be positive");
  if (!(p.z > 0.0)) throw UsageError("confidence_radius: z must be positive");
  return p.z * std::sqrt(metric * (1.0 - metric) / static_cast<double>(p.n));
}

}  // namespace cxrseg
