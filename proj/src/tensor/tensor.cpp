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

#include "cxrseg/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "cxrseg/simd/kernels.hpp"

namespace cxrseg {
namespace {

std::atomic<DType> g_default_dtype{DType::f64};

}  // namespace

std::string_view dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(std::string_view name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw ConfigError("unknown precision '" + std::string(name) + "' (expected f32 or f64)");
}

DType default_dtype() { return g_default_dtype.load(std::memory_order_relaxed); }
void set_default_dtype(DType dtype) { g_default_dtype.store(dtype, std::memory_order_relaxed); }

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)) {
  const std::size_t n = shape_numel(shape_);
  if (dtype == DType::f32) {
    storage_ = std::vector<float>(n, 0.0f);
  } else {
    storage_ = std::vector<double>(n, 0.0);
  }
}

Tensor::Tensor(Shape shape, std::span<const double> values, DType dtype) : Tensor(std::move(shape), dtype) {
  if (values.size() != numel()) {
    throw DimensionError("tensor of shape " + shape_str(shape_) + " needs " + std::to_string(numel()) +
                         " values, got " + std::to_string(values.size()));
  }
  dispatch_dtype(dtype, [&]<typename T>() {
    auto dst = data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<T>(values[i]);
  });
}

Tensor Tensor::filled(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return filled(Shape{1}, value, dtype); }

std::size_t Tensor::numel() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, storage_);
}

double Tensor::at(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); }, storage_);
}

void Tensor::set(std::size_t i, double value) {
  std::visit([&](auto& v) { v.at(i) = static_cast<typename std::decay_t<decltype(v)>::value_type>(value); },
             storage_);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, storage_);
}

Tensor Tensor::cast(DType dtype) const {
  const auto values = to_vector();
  return Tensor(shape_, values, dtype);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double value) {
  std::visit([&](auto& v) { std::fill(v.begin(), v.end(), static_cast<typename std::decay_t<decltype(v)>::value_type>(value)); },
             storage_);
}

void Tensor::accumulate(const Tensor& other) {
  if (other.shape_ != shape_ || other.dtype() != dtype()) {
    throw DimensionError("accumulate: " + shape_str(other.shape_) + " into " + shape_str(shape_));
  }
  dispatch_dtype(dtype(), [&]<typename T>() {
    simd::add(other.data<T>().data(), data<T>().data(), numel());
  });
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (other.shape_ != shape_ || other.dtype() != dtype()) return false;
  return dispatch_dtype(dtype(), [&]<typename T>() {
    return std::memcmp(data<T>().data(), other.data<T>().data(), numel() * sizeof(T)) == 0;
  });
}

bool Tensor::all_finite() const {
  return std::visit(
      [](const auto& v) {
        for (auto x : v) {
          if (!std::isfinite(x)) return false;
        }
        return true;
      },
      storage_);
}

}  // namespace cxrseg
