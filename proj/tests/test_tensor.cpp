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

#include "cxrseg/autograd.hpp"
#include "cxrseg/simd/kernels.hpp"

using namespace cxrseg;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, DType dtype = DType::f64) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape), dtype);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, u(rng));
  return t;
}

// Direct seven-loop convolution with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, co, oh, ow}, x.dtype());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double acc = b.at(o);
          for (std::size_t q = 0; q < ci; ++q)
            for (std::size_t kr = 0; kr < k; ++kr)
              for (std::size_t kc = 0; kc < k; ++kc) {
                const long sr = static_cast<long>(r * stride + kr) - static_cast<long>(pad);
                const long sc = static_cast<long>(c * stride + kc) - static_cast<long>(pad);
                if (sr < 0 || sc < 0 || sr >= static_cast<long>(h) || sc >= static_cast<long>(wd)) continue;
                acc += x.at(((i * ci + q) * h + sr) * wd + sc) * w.at(((o * ci + q) * k + kr) * k + kc);
              }
          y.set(((i * co + o) * oh + r) * ow + c, acc);
        }
  return y;
}

// Scalar probe of an op: sum(op(x) * fixed random weights).
Var weighted_sum(Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Var w = y.tape->constant(random_tensor(rng, y.shape(), y.value().dtype()));
  return sum(mul(y, w));
}

}  // namespace

TEST_CASE("tensor construction, casting and reshaping") {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}, DType::f32);
  CHECK(t.numel() == 6);
  CHECK(t.dtype() == DType::f32);
  CHECK(t.at(4) == 5.0);
  Tensor d = t.cast(DType::f64);
  CHECK(d.dtype() == DType::f64);
  CHECK(d.to_vector() == t.to_vector());
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(Tensor({2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(parse_dtype("f16"), ConfigError);
  Tensor a = Tensor::filled({2, 3}, 1.0, DType::f32);
  a.accumulate(t);
  CHECK(a.at(5) == 7.0);
  CHECK_THROWS_AS(a.accumulate(d), DimensionError);
}

TEST_CASE("conv2d matches the direct convolution") {
  std::mt19937_64 rng(1);
  for (auto [k, stride, pad] : {std::tuple{3u, 1u, 1u}, {3u, 2u, 1u}, {1u, 1u, 0u}, {3u, 1u, 0u}}) {
    CAPTURE(k);
    CAPTURE(stride);
    const Tensor x = random_tensor(rng, {2, 3, 6, 8});
    const Tensor w = random_tensor(rng, {4, 3, k, k});
    const Tensor b = random_tensor(rng, {4});
    const Tensor got = conv2d_forward(x, w, b, stride, pad);
    const Tensor want = naive_conv(x, w, b, stride, pad);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) CHECK(got.at(i) == doctest::Approx(want.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects unsupported kernels and channel mismatches") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor(rng, {1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d_forward(x, random_tensor(rng, {1, 2, 5, 5}), random_tensor(rng, {1}), 1, 2), DimensionError);
  CHECK_THROWS_AS(conv2d_forward(x, random_tensor(rng, {1, 3, 3, 3}), random_tensor(rng, {1}), 1, 1), DimensionError);
}

TEST_CASE("conv2d is identical across kernel ISAs") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {1, 5, 9, 7});
  const Tensor w = random_tensor(rng, {6, 5, 3, 3});
  const Tensor b = random_tensor(rng, {6});
  const auto original = simd::active_isa();
  simd::set_isa(simd::Isa::scalar);
  const Tensor ref = conv2d_forward(x, w, b, 1, 1);
  if (simd::set_isa(simd::Isa::avx2)) {
    const Tensor fast = conv2d_forward(x, w, b, 1, 1);
    for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(fast.at(i) == doctest::Approx(ref.at(i)).epsilon(1e-12));
  }
  simd::set_isa(original);
}

TEST_CASE("max pooling picks the first maximum in scan order") {
  Tape tape;
  Var x = tape.leaf(Tensor({1, 1, 2, 2}, std::vector<double>{3, 3, 1, 3}), true);
  Var y = max_pool2x2(x);
  CHECK(y.value().at(0) == 3.0);
  auto g = backward(tape, sum(y));
  CHECK(g.at(x.id).to_vector() == std::vector<double>{1, 0, 0, 0});
  Tape t2;
  CHECK_THROWS_AS(max_pool2x2(t2.constant(Tensor({1, 1, 3, 2}))), DimensionError);
}

TEST_CASE("upsampling repeats each pixel in a 2x2 block") {
  Tape tape;
  Var y = upsample2x(tape.constant(Tensor({1, 1, 1, 2}, std::vector<double>{1, 2})));
  CHECK(y.value().to_vector() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});
}

TEST_CASE("softmax2 gives a distribution over the two channels") {
  std::mt19937_64 rng(4);
  Tensor logits = random_tensor(rng, {2, 2, 3, 3});
  logits.set(0, 800.0);  // would overflow without the max shift
  const Tensor p = softmax2_forward(logits);
  CHECK(p.all_finite());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(p.at(n * 18 + i) + p.at(n * 18 + 9 + i) == doctest::Approx(1.0).epsilon(1e-15));
    }
  CHECK_THROWS_AS(softmax2_forward(random_tensor(rng, {1, 3, 2, 2})), DimensionError);
}

TEST_CASE("backward needs a scalar loss and skips constants") {
  Tape tape;
  Var a = tape.leaf(Tensor::filled({2}, 1.0, DType::f64), true);
  Var c = tape.constant(Tensor::filled({2}, 2.0, DType::f64));
  CHECK_THROWS_AS(backward(tape, mul(a, c)), UsageError);
  auto g = backward(tape, sum(mul(a, c)));
  CHECK(g.size() == 1);
  CHECK(g.at(a.id).to_vector() == std::vector<double>{2, 2});
}

TEST_CASE("analytic gradients match finite differences for every op") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    const Tensor x = random_tensor(rng, {2, 3, 4, 4});
    const Tensor x2 = random_tensor(rng, {2, 3, 4, 4});
    const Tensor w3 = random_tensor(rng, {2, 3, 3, 3});
    const Tensor w1 = random_tensor(rng, {2, 3, 1, 1});
    const Tensor b = random_tensor(rng, {2});
    const std::vector<Tensor> conv_in{x, w3, b};
    auto conv3 = [&](std::span<const Var> v) { return weighted_sum(conv2d(v[0], v[1], v[2], 1, 1), seed); };
    auto conv3s2 = [&](std::span<const Var> v) { return weighted_sum(conv2d(v[0], v[1], v[2], 2, 1), seed); };
    for (std::size_t which = 0; which < 3; ++which) {
      CHECK(finite_diff_check(conv3, conv_in, which) < 1e-4);
      CHECK(finite_diff_check(conv3s2, conv_in, which) < 1e-4);
    }
    const std::vector<Tensor> conv1_in{x, w1, b};
    auto conv1 = [&](std::span<const Var> v) { return weighted_sum(conv2d(v[0], v[1], v[2], 1, 0), seed); };
    for (std::size_t which = 0; which < 3; ++which) CHECK(finite_diff_check(conv1, conv1_in, which) < 1e-4);

    CHECK(finite_diff_check([&](Var v) { return weighted_sum(relu(v), seed); }, x) < 1e-4);
    CHECK(finite_diff_check([&](Var v) { return weighted_sum(max_pool2x2(v), seed); }, x) < 1e-4);
    CHECK(finite_diff_check([&](Var v) { return weighted_sum(upsample2x(v), seed); }, x) < 1e-4);
    CHECK(finite_diff_check([&](Var v) { return weighted_sum(scale(v, -1.5), seed); }, x) < 1e-4);
    const std::vector<Tensor> pair{x, x2};
    auto cat = [&](std::span<const Var> v) { return weighted_sum(concat_channels(v[0], v[1]), seed); };
    auto addf = [&](std::span<const Var> v) { return weighted_sum(add(v[0], v[1]), seed); };
    auto mulf = [&](std::span<const Var> v) { return weighted_sum(mul(v[0], v[1]), seed); };
    for (std::size_t which = 0; which < 2; ++which) {
      CHECK(finite_diff_check(cat, pair, which) < 1e-4);
      CHECK(finite_diff_check(addf, pair, which) < 1e-4);
      CHECK(finite_diff_check(mulf, pair, which) < 1e-4);
    }
    const Tensor logits = random_tensor(rng, {2, 2, 3, 3});
    CHECK(finite_diff_check([&](Var v) { return weighted_sum(softmax2(v), seed); }, logits) < 1e-4);
  }
}

TEST_CASE("gradients reaching a node through two paths are summed") {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, std::vector<double>{1, 2, 3}), true);
  Var y = sum(add(mul(x, x), scale(x, 2.0)));  // d/dx = 2x + 2
  auto g = backward(tape, y);
  CHECK(g.at(x.id).to_vector() == std::vector<double>{4, 6, 8});
}
