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

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cxrseg/simd/kernels.hpp"

using namespace cxrseg::simd;

namespace {

template <typename T>
std::vector<T> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <typename T>
void check_tables(const KernelTable<T>& ref, const KernelTable<T>& fast, double tol) {
  std::mt19937_64 rng(42);
  for (std::size_t n = 0; n < 70; ++n) {
    CAPTURE(n);
    auto x = random_vec<T>(rng, n), y = random_vec<T>(rng, n), g = random_vec<T>(rng, n);
    if (n > 3) x[3] = T(0);  // relu boundary

    CHECK(std::abs(double(ref.dot(x.data(), y.data(), n)) - double(fast.dot(x.data(), y.data(), n))) <= tol * (1 + n));
    CHECK(std::abs(double(ref.sum(x.data(), n)) - double(fast.sum(x.data(), n))) <= tol * (1 + n));

    auto y1 = y, y2 = y;
    ref.axpy(T(0.75), x.data(), y1.data(), n);
    fast.axpy(T(0.75), x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(double(y1[i]) - double(y2[i])) <= tol);

    y1 = y;
    y2 = y;
    ref.add(x.data(), y1.data(), n);
    fast.add(x.data(), y2.data(), n);
    CHECK(y1 == y2);

    std::vector<T> r1(n), r2(n);
    ref.relu(x.data(), r1.data(), n);
    fast.relu(x.data(), r2.data(), n);
    CHECK(r1 == r2);

    r1 = y;
    r2 = y;
    ref.relu_grad(x.data(), g.data(), r1.data(), n);
    fast.relu_grad(x.data(), g.data(), r2.data(), n);
    CHECK(r1 == r2);
  }
}

}  // namespace

TEST_CASE("generic kernels compute the textbook definitions") {
  const auto& k = generic::table_f64();
  std::vector<double> x{1, -2, 3, 0}, y{4, 5, -6, 7};
  CHECK(k.dot(x.data(), y.data(), 4) == doctest::Approx(1 * 4 - 2 * 5 - 3 * 6));
  CHECK(k.sum(x.data(), 4) == doctest::Approx(2));
  std::vector<double> out(4);
  k.relu(x.data(), out.data(), 4);
  CHECK(out == std::vector<double>{1, 0, 3, 0});
  std::vector<double> acc{1, 1, 1, 1};
  k.relu_grad(x.data(), y.data(), acc.data(), 4);
  CHECK(acc == std::vector<double>{5, 1, -5, 1});  // zero input passes no gradient
}

#if defined(CXRSEG_HAVE_AVX2)
TEST_CASE("avx2 kernels match the scalar reference") {
  if (!cpu_supports_avx2()) {
    MESSAGE("CPU lacks AVX2; skipping");
    return;
  }
  check_tables(generic::table_f64(), avx2::table_f64(), 1e-12);
  check_tables(generic::table_f32(), avx2::table_f32(), 2e-5);
}
#endif

TEST_CASE("isa can be forced to scalar and back") {
  const Isa original = active_isa();
  REQUIRE(set_isa(Isa::scalar));
  CHECK(active_isa() == Isa::scalar);
  CHECK(&kernels<double>() == &generic::table_f64());
  CHECK(isa_name(Isa::scalar) == "scalar");
  if (cpu_supports_avx2() && set_isa(Isa::avx2)) CHECK(active_isa() == Isa::avx2);
  set_isa(original);
}
