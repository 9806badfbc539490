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
#include <cmath>
#include <numeric>

#include "cxrseg/mask.hpp"

namespace cxrseg {

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::uint8_t value)
    : height_(height), width_(width), values_(height * width, value ? 1 : 0) {}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height * width) {
    throw DimensionError("mask " + std::to_string(height) + "x" + std::to_string(width) + " given " +
                         std::to_string(values_.size()) + " values");
  }
  for (auto& v : values_) v = v ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

ProbMap::ProbMap(std::size_t height, std::size_t width, std::vector<double> foreground)
    : height_(height), width_(width), foreground_(std::move(foreground)) {
  if (foreground_.size() != height * width) throw DimensionError("probability map size mismatch");
  background_.resize(foreground_.size());
  for (std::size_t i = 0; i < foreground_.size(); ++i) background_[i] = 1.0 - foreground_[i];
}

ProbMap::ProbMap(std::size_t height, std::size_t width, std::vector<double> background,
                 std::vector<double> foreground)
    : height_(height), width_(width), background_(std::move(background)), foreground_(std::move(foreground)) {
  if (foreground_.size() != height * width || background_.size() != height * width) {
    throw DimensionError("probability map size mismatch");
  }
}

ProbMap ProbMap::from_batch(const Tensor& probs, std::size_t index) {
  if (probs.rank() != 4 || probs.dim(1) != 2) {
    throw DimensionError("expected N x 2 x H x W probabilities, got " + shape_str(probs.shape()));
  }
  if (index >= probs.dim(0)) throw DimensionError("batch index out of range");
  const std::size_t h = probs.dim(2), w = probs.dim(3), hw = h * w;
  std::vector<double> bg(hw), fg(hw);
  const std::size_t base = index * 2 * hw;
  for (std::size_t i = 0; i < hw; ++i) {
    bg[i] = probs.at(base + i);
    fg[i] = probs.at(base + hw + i);
  }
  return ProbMap(h, w, std::move(bg), std::move(fg));
}

std::vector<std::uint8_t> stack_labels(const std::vector<const BinaryMask*>& masks) {
  std::vector<std::uint8_t> out;
  if (masks.empty()) return out;
  out.reserve(masks.size() * masks.front()->size());
  for (const BinaryMask* m : masks) {
    if (!m->same_dims(*masks.front())) throw DimensionError("stack_labels: masks differ in size");
    out.insert(out.end(), m->values().begin(), m->values().end());
  }
  return out;
}

}  // namespace cxrseg
