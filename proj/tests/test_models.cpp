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

#include "cxrseg/models.hpp"

using namespace cxrseg;

namespace {

ModelConfig cfg(Arch a, std::size_t depth, std::size_t base = 8) {
  ModelConfig c;
  c.arch = a;
  c.depth = depth;
  c.base_channels = base;
  return c;
}

Tensor random_batch(std::size_t n, std::size_t side, std::uint64_t seed, DType dtype = DType::f64) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({n, 1, side, side}, dtype);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, u(rng));
  return t;
}

// 3x3 conv with bias.
constexpr std::size_t conv3(std::size_t cin, std::size_t cout) { return 9 * cin * cout + cout; }
constexpr std::size_t conv1(std::size_t cin, std::size_t cout) { return cin * cout + cout; }
constexpr std::size_t block(std::size_t cin, std::size_t cout) { return conv3(cin, cout) + conv3(cout, cout); }

}  // namespace

TEST_CASE("parameter counts follow the wiring") {
  const std::size_t enc2 = block(1, 8) + block(8, 16);
  const std::size_t enc3 = enc2 + block(16, 32);
  CHECK(build_model(cfg(Arch::unet, 2), 0).param_count() == enc2 + block(24, 8) + conv1(8, 2));
  CHECK(build_model(cfg(Arch::unet, 3), 0).param_count() == enc3 + block(48, 16) + block(24, 8) + conv1(8, 2));
  CHECK(build_model(cfg(Arch::unetpp, 3), 0).param_count() ==
        enc3 + block(24, 8) + block(48, 16) + block(32, 8) + conv1(8, 2));
  CHECK(build_model(cfg(Arch::fpn, 3), 0).param_count() ==
        enc3 + conv1(8, 8) + conv1(16, 8) + conv1(32, 8) + 3 * conv3(8, 2) + conv3(6, 2));
}

TEST_CASE("nested decoder adds parameters from depth 3 on") {
  CHECK(build_model(cfg(Arch::unetpp, 2), 0).param_count() == build_model(cfg(Arch::unet, 2), 0).param_count());
  for (std::size_t d = 3; d <= 4; ++d) {
    CHECK(build_model(cfg(Arch::unetpp, d), 0).param_count() > build_model(cfg(Arch::unet, d), 0).param_count());
  }
}

TEST_CASE("initialization is seeded Glorot-uniform with zero biases") {
  const SegModel a = build_model(cfg(Arch::unet, 3), 7);
  const SegModel b = build_model(cfg(Arch::unet, 3), 7);
  const SegModel c = build_model(cfg(Arch::unet, 3), 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].second.bitwise_equal(b.params()[i].second));
    differs = differs || !a.params()[i].second.bitwise_equal(c.params()[i].second);
  }
  CHECK(differs);
  for (const auto& l : a.layers()) {
    const double limit = std::sqrt(6.0 / (double(l.kernel * l.kernel) * double(l.in_channels + l.out_channels)));
    const Tensor& w = a.param(l.name + ".weight");
    double worst = 0.0;
    for (std::size_t i = 0; i < w.numel(); ++i) worst = std::max(worst, std::abs(w.at(i)));
    CHECK(worst <= limit);
    CHECK(worst > 0.5 * limit);
    const Tensor& bias = a.param(l.name + ".bias");
    for (std::size_t i = 0; i < bias.numel(); ++i) CHECK(bias.at(i) == 0.0);
  }
  CHECK_THROWS_AS(a.param("nope.weight"), NotFoundError);
}

TEST_CASE("forward returns per-pixel two-class distributions") {
  for (Arch arch : {Arch::unet, Arch::unetpp, Arch::fpn}) {
    CAPTURE(arch_name(arch));
    const SegModel m = build_model(cfg(arch, 3, 4), 3);
    const Tensor p = forward(m, random_batch(2, 16, 1));
    REQUIRE(p.shape() == Shape{2, 2, 16, 16});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 256; ++i) {
        const double bg = p.at(n * 512 + i), fg = p.at(n * 512 + 256 + i);
        CHECK(bg >= 0.0);
        CHECK(fg >= 0.0);
        CHECK(bg + fg == doctest::Approx(1.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("unet and unetpp differ at depth 3") {
  const Tensor x = random_batch(1, 16, 2);
  const Tensor a = forward(build_model(cfg(Arch::unet, 3), 5), x);
  const Tensor b = forward(build_model(cfg(Arch::unetpp, 3), 5), x);
  CHECK_FALSE(a.bitwise_equal(b));
}

TEST_CASE("input sides must be divisible by 2^(depth-1)") {
  const SegModel m = build_model(cfg(Arch::unet, 3), 0);
  CHECK_NOTHROW(forward(m, random_batch(1, 12, 0)));
  CHECK_THROWS_AS(forward(m, random_batch(1, 10, 0)), DimensionError);
  Tensor two_channel({1, 2, 8, 8}, DType::f64);
  CHECK_THROWS_AS(forward(m, two_channel), DimensionError);
}

TEST_CASE("configuration is validated") {
  CHECK_THROWS_AS(build_model(cfg(Arch::unet, 1), 0), ConfigError);
  CHECK_THROWS_AS(build_model(cfg(Arch::unet, 5), 0), ConfigError);
  CHECK_THROWS_AS(build_model(cfg(Arch::unet, 3, 2), 0), ConfigError);
  CHECK_THROWS_AS(parse_arch("resnet"), ConfigError);
  CHECK(parse_arch("unet++") == Arch::unetpp);
}

TEST_CASE("single precision tracks double precision") {
  const SegModel m64 = build_model(cfg(Arch::fpn, 3), 9, DType::f64);
  const SegModel m32 = build_model(cfg(Arch::fpn, 3), 9, DType::f32);
  CHECK(m32.dtype() == DType::f32);
  const Tensor x = random_batch(1, 16, 3);
  const Tensor p64 = forward(m64, x);
  const Tensor p32 = forward(m32, x.cast(DType::f32));
  for (std::size_t i = 0; i < p64.numel(); ++i) CHECK(std::abs(p64.at(i) - p32.at(i)) < 1e-5);
}

TEST_CASE("model summary reports parameters and a median time") {
  const SegModel m = build_model(cfg(Arch::unet, 2, 4), 0);
  const ModelSummary s = model_summary(m, random_batch(1, 16, 0));
  CHECK(s.param_count == m.param_count());
  CHECK(s.inference_ms > 0.0);
}
