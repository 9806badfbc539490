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

#include <deque>

#include "cxrseg/maskops.hpp"

namespace cxrseg {

LabeledRegions connected_components(const BinaryMask& mask) {
  const std::size_t h = mask.height(), w = mask.width();
  LabeledRegions out;
  out.height = h;
  out.width = w;
  out.labels.assign(h * w, 0);

  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!mask[start] || out.labels[start]) continue;
    Region r;
    r.id = out.regions.size() + 1;
    r.min_row = r.max_row = start / w;
    r.min_col = r.max_col = start % w;
    double sum_row = 0.0, sum_col = 0.0;

    out.labels[start] = static_cast<std::uint32_t>(r.id);
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t row = p / w, col = p % w;
      ++r.count;
      sum_row += static_cast<double>(row);
      sum_col += static_cast<double>(col);
      r.min_row = std::min(r.min_row, row);
      r.max_row = std::max(r.max_row, row);
      r.min_col = std::min(r.min_col, col);
      r.max_col = std::max(r.max_col, col);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const auto ny = static_cast<std::ptrdiff_t>(row) + dy;
          const auto nx = static_cast<std::ptrdiff_t>(col) + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(h) || nx >= static_cast<std::ptrdiff_t>(w)) {
            continue;
          }
          const std::size_t q = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          if (mask[q] && !out.labels[q]) {
            out.labels[q] = static_cast<std::uint32_t>(r.id);
            stack.push_back(q);
          }
        }
      }
    }
    r.centroid_row = sum_row / static_cast<double>(r.count);
    r.centroid_col = sum_col / static_cast<double>(r.count);
    out.regions.push_back(r);
  }
  return out;
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const std::size_t h = mask.height(), w = mask.width();
  if (h == 0 || w == 0) return mask;
  // Background reachable from the border through 4-neighbours.
  std::vector<std::uint8_t> outside(h * w, 0);
  std::deque<std::size_t> queue;
  auto seed = [&](std::size_t p) {
    if (!mask[p] && !outside[p]) {
      outside[p] = 1;
      queue.push_back(p);
    }
  };
  for (std::size_t c = 0; c < w; ++c) {
    seed(c);
    seed((h - 1) * w + c);
  }
  for (std::size_t r = 0; r < h; ++r) {
    seed(r * w);
    seed(r * w + w - 1);
  }
  while (!queue.empty()) {
    const std::size_t p = queue.front();
    queue.pop_front();
    const std::size_t row = p / w, col = p % w;
    if (row > 0) seed(p - w);
    if (row + 1 < h) seed(p + w);
    if (col > 0) seed(p - 1);
    if (col + 1 < w) seed(p + 1);
  }
  std::vector<std::uint8_t> values(h * w);
  for (std::size_t i = 0; i < h * w; ++i) values[i] = (mask[i] || !outside[i]) ? 1 : 0;
  return BinaryMask(h, w, std::move(values));
}

BinaryMask remove_small_regions(const BinaryMask& mask, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("small-region fraction must be in (0,1)");
  const LabeledRegions lr = connected_components(mask);
  const std::size_t total = mask.count();
  if (total == 0) return mask;
  std::vector<std::uint8_t> keep(lr.regions.size() + 1, 0);
  for (const Region& r : lr.regions) {
    // count / total < fraction, i.e. strictly below the cutoff.
    keep[r.id] = static_cast<double>(r.count) / static_cast<double>(total) < fraction ? 0 : 1;
  }
  std::vector<std::uint8_t> values(mask.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = keep[lr.labels[i]];
  return BinaryMask(mask.height(), mask.width(), std::move(values));
}

}  // namespace cxrseg
