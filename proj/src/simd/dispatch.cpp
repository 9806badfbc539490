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

#include <atomic>
#include <cstdlib>
#include <string_view>

#include "cxrseg/simd/kernels.hpp"

namespace cxrseg::simd {
namespace {

Isa detect() {
  if (const char* env = std::getenv("CXRSEG_SIMD"); env != nullptr && std::string_view(env) == "scalar") {
    return Isa::scalar;
  }
  return cpu_supports_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool cpu_supports_avx2() {
#if defined(CXRSEG_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool set_isa(Isa isa) {
  if (isa == Isa::avx2 && !cpu_supports_avx2()) return false;
  current().store(isa, std::memory_order_relaxed);
  return true;
}

template <>
const KernelTable<float>& kernels_for<float>(Isa isa) {
#if defined(CXRSEG_HAVE_AVX2)
  if (isa == Isa::avx2) return avx2::table_f32();
#endif
  (void)isa;
  return generic::table_f32();
}

template <>
const KernelTable<double>& kernels_for<double>(Isa isa) {
#if defined(CXRSEG_HAVE_AVX2)
  if (isa == Isa::avx2) return avx2::table_f64();
#endif
  (void)isa;
  return generic::table_f64();
}

template <>
const KernelTable<float>& kernels<float>() {
  return kernels_for<float>(active_isa());
}

template <>
const KernelTable<double>& kernels<double>() {
  return kernels_for<double>(active_isa());
}

}  // namespace cxrseg::simd
