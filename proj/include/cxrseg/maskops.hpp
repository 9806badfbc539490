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

// Binary-mask post-processing for predicted lung and infection masks.
//
// Foreground connectivity is 8, background (hole) connectivity is 4.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cxrseg/mask.hpp"

namespace cxrseg {

struct Region {
  std::size_t id = 0;
  std::size_t count = 0;
  std::size_t min_row = 0, min_col = 0, max_row = 0, max_col = 0;
  double centroid_row = 0.0;
  double centroid_col = 0.0;
};

struct LabeledRegions {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> labels;  // 0 = background, regions are 1..N
  std::vector<Region> regions;        // regions[i].id == i + 1
};

/// Pixel is foreground iff its foreground probability is strictly above t.
BinaryMask threshold(const ProbMap& probs, double t = 0.5);

/// 8-connected labeling; ids follow the row-major position of each region's
/// first pixel.
LabeledRegions connected_components(const BinaryMask& mask);

BinaryMask fill_holes(const BinaryMask& mask);

/// Erases every region smaller than fraction * (foreground count of the
/// input). The cutoff is computed once.
BinaryMask remove_small_regions(const BinaryMask& mask, double fraction = 0.05);

BinaryMask intersect_masks(const BinaryMask& infection, const BinaryMask& lung);

struct PostprocessOptions {
  double threshold = 0.5;
  double min_region_fraction = 0.05;
  /// Also hole-fill and small-region-filter infection masks before the AND.
  bool clean_infection = false;
};

BinaryMask postprocess_lung(const ProbMap& probs, const PostprocessOptions& opts = {});
BinaryMask postprocess_infection(const ProbMap& probs, const BinaryMask& lung, const PostprocessOptions& opts = {});

}  // namespace cxrseg
