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

// Independent reference implementations used as test oracles. They are
// deliberately naive: explicit stacks, recounts and textbook formulas.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "cxrseg/mask.hpp"

namespace cxrseg::oracle {

/// Flood-fill labeling; connectivity 4 or 8. Labels start at 1 in scan order.
inline std::vector<int> flood_labels(const BinaryMask& m, int connectivity) {
  const int h = static_cast<int>(m.height()), w = static_cast<int>(m.width());
  std::vector<int> lab(m.size(), 0);
  int next = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!m(r, c) || lab[r * w + c]) continue;
      ++next;
      std::vector<std::pair<int, int>> stack{{r, c}};
      lab[r * w + c] = next;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dy == 0 && dx == 0) || (connectivity == 4 && dy != 0 && dx != 0)) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w || !m(ny, nx) || lab[ny * w + nx]) continue;
            lab[ny * w + nx] = next;
            stack.emplace_back(ny, nx);
          }
      }
    }
  return lab;
}

/// Background pixels not 4-connected to the border become foreground.
inline BinaryMask border_flood_fill(const BinaryMask& m) {
  const std::size_t h = m.height(), w = m.width();
  BinaryMask inv(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) inv.set(i, !m[i]);
  const auto lab = flood_labels(inv, 4);
  std::vector<bool> touches(m.size() + 1, false);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      if (r == 0 || c == 0 || r + 1 == h || c + 1 == w) touches[lab[r * w + c]] = true;
    }
  BinaryMask out(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) out.set(i, m[i] || (lab[i] && !touches[lab[i]]));
  return out;
}

/// Erase 8-connected regions with count < fraction * total.
inline BinaryMask drop_small(const BinaryMask& m, double fraction) {
  const auto lab = flood_labels(m, 8);
  std::map<int, std::size_t> count;
  std::size_t total = 0;
  for (int l : lab) {
    if (l) {
      ++count[l];
      ++total;
    }
  }
  BinaryMask out(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (lab[i]) out.set(i, static_cast<double>(count[lab[i]]) >= fraction * static_cast<double>(total));
  }
  return out;
}

/// Two labelings describe the same partition.
inline bool same_partition(const std::vector<int>& a, const std::vector<std::uint32_t>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, std::uint32_t> ab;
  std::map<std::uint32_t, int> ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == 0) != (b[i] == 0)) return false;
    if (!a[i]) continue;
    auto [it1, new1] = ab.emplace(a[i], b[i]);
    auto [it2, new2] = ba.emplace(b[i], a[i]);
    if (it1->second != b[i] || it2->second != a[i]) return false;
  }
  return true;
}

struct Counts {
  double tp = 0, tn = 0, fp = 0, fn = 0;
};

inline Counts count(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && gt[i]) c.tp += 1;
    else if (!pred[i] && !gt[i]) c.tn += 1;
    else if (pred[i]) c.fp += 1;
    else c.fn += 1;
  }
  return c;
}

inline double accuracy(const Counts& c) { return (c.tp + c.tn) / (c.tp + c.tn + c.fp + c.fn); }
inline double iou(const Counts& c) { return c.tp + c.fp + c.fn == 0 ? 1.0 : c.tp / (c.tp + c.fp + c.fn); }
inline double dsc(const Counts& c) { return c.tp + c.fp + c.fn == 0 ? 1.0 : 2 * c.tp / (2 * c.tp + c.fp + c.fn); }
inline std::optional<double> ratio(double num, double den) {
  return den == 0 ? std::nullopt : std::optional<double>(num / den);
}

}  // namespace cxrseg::oracle
