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

// Vector kernels used by the tensor inner loops.
//
// Every kernel has a portable scalar reference (namespace `generic`) and, on
// x86-64, an AVX2+FMA variant (namespace `avx2`). The public entry points in
// `cxrseg::simd` dispatch through a table chosen once at startup from CPUID;
// the environment variable CXRSEG_SIMD=scalar forces the reference path.

#pragma once

#include <cstddef>
#include <string_view>

namespace cxrseg::simd {

enum class Isa { scalar, avx2 };

template <typename T>
struct KernelTable {
  T (*dot)(const T* x, const T* y, std::size_t n);
  T (*sum)(const T* x, std::size_t n);
  void (*axpy)(T a, const T* x, T* y, std::size_t n);  // y += a*x
  void (*add)(const T* x, T* y, std::size_t n);         // y += x
  void (*relu)(const T* x, T* out, std::size_t n);
  void (*relu_grad)(const T* x, const T* g, T* out, std::size_t n);  // out += g*[x>0]
};

namespace generic {
const KernelTable<float>& table_f32();
const KernelTable<double>& table_f64();
}  // namespace generic

#if defined(CXRSEG_HAVE_AVX2)
namespace avx2 {
const KernelTable<float>& table_f32();
const KernelTable<double>& table_f64();
}  // namespace avx2
#endif

bool cpu_supports_avx2();

Isa active_isa();
std::string_view isa_name(Isa isa);

/// Switches the dispatch table. Returns false (and leaves the table alone)
/// when the requested ISA is not compiled in or not supported by the CPU.
bool set_isa(Isa isa);

template <typename T>
const KernelTable<T>& kernels();

template <typename T>
const KernelTable<T>& kernels_for(Isa isa);

template <>
const KernelTable<float>& kernels<float>();
template <>
const KernelTable<double>& kernels<double>();
template <>
const KernelTable<float>& kernels_for<float>(Isa isa);
template <>
const KernelTable<double>& kernels_for<double>(Isa isa);

template <typename T>
inline T dot(const T* x, const T* y, std::size_t n) {
  return kernels<T>().dot(x, y, n);
}
template <typename T>
inline T sum(const T* x, std::size_t n) {
  return kernels<T>().sum(x, n);
}
template <typename T>
inline void axpy(T a, const T* x, T* y, std::size_t n) {
  kernels<T>().axpy(a, x, y, n);
}
template <typename T>
inline void add(const T* x, T* y, std::size_t n) {
  kernels<T>().add(x, y, n);
}
template <typename T>
inline void relu(const T* x, T* out, std::size_t n) {
  kernels<T>().relu(x, out, n);
}
template <typename T>
inline void relu_grad(const T* x, const T* g, T* out, std::size_t n) {
  kernels<T>().relu_grad(x, g, out, n);
}

}  // namespace cxrseg::simd
