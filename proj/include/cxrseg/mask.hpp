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
#include <cstdint>
#include <vector>

#include "cxrseg/tensor.hpp"

namespace cxrseg {

/// Per-pixel {0,1} labels, row-major.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, std::uint8_t value = 0);
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::uint8_t operator()(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
  void set(std::size_t row, std::size_t col, bool on) { values_[row * width_ + col] = on ? 1 : 0; }
  std::uint8_t operator[](std::size_t i) const { return values_[i]; }
  void set(std::size_t i, bool on) { values_[i] = on ? 1 : 0; }

  const std::vector<std::uint8_t>& values() const noexcept { return values_; }
  std::size_t count() const;
  bool empty_foreground() const { return count() == 0; }
  bool same_dims(const BinaryMask& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// Two-class per-pixel probabilities for one image: channel 0 background,
/// channel 1 foreground (lung or lesion).
class ProbMap {
 public:
  ProbMap() = default;
  /// Background is 1 - foreground.
  ProbMap(std::size_t height, std::size_t width, std::vector<double> foreground);
  ProbMap(std::size_t height, std::size_t width, std::vector<double> background, std::vector<double> foreground);

  /// Sample `index` of an N x 2 x H x W softmax output.
  static ProbMap from_batch(const Tensor& probs, std::size_t index);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  double background(std::size_t i) const { return background_[i]; }
  double foreground(std::size_t i) const { return foreground_[i]; }
  const std::vector<double>& foreground() const noexcept { return foreground_; }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> background_;
  std::vector<double> foreground_;
};

/// Packs masks of identical size into per-pixel class labels (N*H*W).
std::vector<std::uint8_t> stack_labels(const std::vector<const BinaryMask*>& masks);

}  // namespace cxrseg
