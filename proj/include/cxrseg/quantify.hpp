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

#include <cstddef>
#include <string>

#include <json.hpp>

#include "cxrseg/data_io.hpp"
#include "cxrseg/mask.hpp"
#include "cxrseg/maskops.hpp"
#include "cxrseg/models.hpp"

namespace cxrseg {

/// Quantification was asked for a mask pair whose lung mask is empty.
class NoLungError : public Error {
 public:
  NoLungError() : Error("no lung detected") {}
};

enum class Detection { negative, positive };
std::string detection_name(Detection d);

/// Positive iff at least one pixel is set.
Detection detect(const BinaryMask& infection);

/// 100 * |infection| / |lung|. Throws NoLungError for an empty lung.
double infection_percentage(const BinaryMask& infection, const BinaryMask& lung);

/// Sides are in image coordinates: left is the smaller column.
struct LungSides {
  BinaryMask left;
  BinaryMask right;
};

/// Two largest regions are ordered by centroid column and every other region
/// joins the side whose centroid is nearer. A single region is cut at the
/// vertical midline of its bounding box.
LungSides split_lungs(const BinaryMask& lung);

struct SideStats {
  std::size_t lung_pixels = 0;
  std::size_t infection_pixels = 0;
  double pct = 0.0;
  bool absent = false;  // no lung pixels on this side
};

struct LungPercentages {
  SideStats left;
  SideStats right;
};

LungPercentages per_lung_percentages(const BinaryMask& infection, const BinaryMask& lung);

struct QuantReport {
  std::string case_id;
  std::string timestamp;
  std::string status = "ok";  // "ok" or "no_lung_detected"
  Detection detection = Detection::negative;
  double overall_pct = 0.0;
  std::size_t lung_pixels = 0;
  std::size_t infection_pixels = 0;
  SideStats left;
  SideStats right;
};

/// Builds a report from final masks. An empty lung yields status
/// "no_lung_detected" rather than an exception.
QuantReport quantify(const BinaryMask& infection, const BinaryMask& lung, const std::string& case_id = {},
                     const std::string& timestamp = {});

nlohmann::json to_json(const QuantReport& report);

enum class PipelineMode { parallel, cascaded };
std::string mode_name(PipelineMode m);
PipelineMode parse_mode(const std::string& name);

struct PipelineOptions {
  PipelineMode mode = PipelineMode::parallel;
  PostprocessOptions post;
  std::string case_id;
  std::string timestamp;
};

struct PipelineResult {
  QuantReport report;
  ProbMap lung_probs;
  ProbMap infection_probs;
  BinaryMask lung;
  BinaryMask infection;
};

/// Parallel: both models see the image. Cascaded: the infection model sees
/// the image with non-lung pixels set to zero.
PipelineResult run_pipeline(const GrayImage& image, const SegModel& lung_model, const SegModel& inf_model,
                            const PipelineOptions& opts = {});

}  // namespace cxrseg
