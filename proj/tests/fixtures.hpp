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

// Shared fixtures for the unit tests.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cxrseg/mask.hpp"

namespace cxrseg::testing {

/// Blobby random mask: each pixel is on with probability `density`, then
/// a few rectangles are stamped so regions of varied size appear.
inline BinaryMask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double density = 0.3) {
  std::bernoulli_distribution on(density);
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, on(rng));
  std::uniform_int_distribution<std::size_t> rr(0, h - 1), cc(0, w - 1), len(1, std::max<std::size_t>(2, h / 3));
  const std::size_t rects = std::uniform_int_distribution<std::size_t>(0, 4)(rng);
  for (std::size_t k = 0; k < rects; ++k) {
    const std::size_t r0 = rr(rng), c0 = cc(rng), rh = len(rng), cw = len(rng);
    const bool value = on(rng);
    for (std::size_t r = r0; r < std::min(h, r0 + rh); ++r) {
      for (std::size_t c = c0; c < std::min(w, c0 + cw); ++c) m.set(r, c, value);
    }
  }
  return m;
}

/// Axis-aligned filled ellipse.
inline BinaryMask ellipse(std::size_t h, std::size_t w, double cr, double cc, double rr, double rc) {
  BinaryMask m(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double dr = (static_cast<double>(r) - cr) / rr, dc = (static_cast<double>(c) - cc) / rc;
      if (dr * dr + dc * dc <= 1.0) m.set(r, c, true);
    }
  }
  return m;
}

inline BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  BinaryMask m(a.height(), a.width());
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, a[i] || b[i]);
  return m;
}

inline BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  BinaryMask m(a.height(), a.width());
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, a[i] && b[i]);
  return m;
}

}  // namespace cxrseg::testing
