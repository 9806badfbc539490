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
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "cxrseg/errors.hpp"

namespace cxrseg {

/// Element type. The numeric codes are the ones stored in weights files.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::string_view dtype_name(DType dtype);
DType parse_dtype(std::string_view name);  // "f32" | "f64"

/// Process-wide precision mode. Tensors created without an explicit dtype
/// use it; operations refuse to mix dtypes.
DType default_dtype();
void set_default_dtype(DType dtype);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. Batches of images use N x C x H x W.
class Tensor {
 public:
  Tensor() : Tensor(Shape{0}) {}
  explicit Tensor(Shape shape, DType dtype = default_dtype());
  Tensor(Shape shape, std::span<const double> values, DType dtype = default_dtype());

  static Tensor filled(Shape shape, double value, DType dtype = default_dtype());
  static Tensor scalar(double value, DType dtype = default_dtype());

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept;
  DType dtype() const noexcept { return storage_.index() == 0 ? DType::f32 : DType::f64; }

  template <typename T>
  std::span<T> data() {
    return std::span<T>(std::get<std::vector<T>>(storage_));
  }
  template <typename T>
  std::span<const T> data() const {
    return std::span<const T>(std::get<std::vector<T>>(storage_));
  }

  double at(std::size_t i) const;
  void set(std::size_t i, double value);
  std::vector<double> to_vector() const;

  Tensor cast(DType dtype) const;
  /// Same data, different shape with equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(double value);
  /// this += other (same shape and dtype).
  void accumulate(const Tensor& other);

  bool bitwise_equal(const Tensor& other) const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::variant<std::vector<float>, std::vector<double>> storage_;
};

/// Calls fn.template operator()<T>() with T the C++ type of `dtype`.
template <typename Fn>
decltype(auto) dispatch_dtype(DType dtype, Fn&& fn) {
  if (dtype == DType::f32) return std::forward<Fn>(fn).template operator()<float>();
  return std::forward<Fn>(fn).template operator()<double>();
}

}  // namespace cxrseg
