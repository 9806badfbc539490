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

#include "cxrseg/maskops.hpp"

namespace cxrseg {

BinaryMask threshold(const ProbMap& probs, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("threshold must lie in [0,1]");
  const std::size_t n = probs.height() * probs.width();
  std::vector<std::uint8_t> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = probs.foreground(i) > t ? 1 : 0;
  return BinaryMask(probs.height(), probs.width(), std::move(values));
}

BinaryMask intersect_masks(const BinaryMask& infection, const BinaryMask& lung) {
  if (!infection.same_dims(lung)) {
    throw DimensionError("intersect_masks: " + std::to_string(infection.height()) + "x" +
                         std::to_string(infection.width()) + " vs " + std::to_string(lung.height()) + "x" +
                         std::to_string(lung.width()));
  }
  std::vector<std::uint8_t> values(lung.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = infection[i] & lung[i];
  return BinaryMask(lung.height(), lung.width(), std::move(values));
}

BinaryMask postprocess_lung(const ProbMap& probs, const PostprocessOptions& opts) {
  return remove_small_regions(fill_holes(threshold(probs, opts.threshold)), opts.min_region_fraction);
}

BinaryMask postprocess_infection(const ProbMap& probs, const BinaryMask& lung, const PostprocessOptions& opts) {
  BinaryMask raw = threshold(probs, opts.threshold);
  if (opts.clean_infection) raw = remove_small_regions(fill_holes(raw), opts.min_region_fraction);
  return intersect_masks(raw, lung);
}

}  // namespace cxrseg
