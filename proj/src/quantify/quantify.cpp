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

#include <algorithm>
#include <cmath>

#include "cxrseg/quantify.hpp"

namespace cxrseg {
namespace {

void check_same(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_dims(b)) {
    throw DimensionError(std::string(what) + ": infection " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs lung " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
  }
}

std::size_t overlap(const BinaryMask& a, const BinaryMask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += (a[i] && b[i]) ? 1 : 0;
  return n;
}

SideStats side_stats(const BinaryMask& infection, const BinaryMask& side) {
  SideStats s;
  s.lung_pixels = side.count();
  s.infection_pixels = overlap(infection, side);
  s.absent = s.lung_pixels == 0;
  if (!s.absent) s.pct = 100.0 * static_cast<double>(s.infection_pixels) / static_cast<double>(s.lung_pixels);
  return s;
}

}  // namespace

std::string detection_name(Detection d) { return d == Detection::positive ? "positive" : "negative"; }

Detection detect(const BinaryMask& infection) {
  const auto& v = infection.values();
  return std::any_of(v.begin(), v.end(), [](std::uint8_t x) { return x != 0; }) ? Detection::positive
                                                                               : Detection::negative;
}

double infection_percentage(const BinaryMask& infection, const BinaryMask& lung) {
  check_same(infection, lung, "infection_percentage");
  const std::size_t n_lung = lung.count();
  if (n_lung == 0) throw NoLungError();
  return 100.0 * static_cast<double>(infection.count()) / static_cast<double>(n_lung);
}

LungSides split_lungs(const BinaryMask& lung) {
  const LabeledRegions lr = connected_components(lung);
  if (lr.regions.empty()) throw NoLungError();
  LungSides sides{BinaryMask(lung.height(), lung.width()), BinaryMask(lung.height(), lung.width())};
  const std::size_t w = lung.width();

  if (lr.regions.size() == 1) {
    const Region& r = lr.regions.front();
    const std::size_t mid = r.min_col + (r.max_col - r.min_col + 1) / 2;
    for (std::size_t i = 0; i < lung.size(); ++i) {
      if (!lung[i]) continue;
      (i % w < mid ? sides.left : sides.right).set(i, true);
    }
    return sides;
  }

  std::vector<const Region*> by_size;
  for (const auto& r : lr.regions) by_size.push_back(&r);
  std::stable_sort(by_size.begin(), by_size.end(), [](const Region* a, const Region* b) { return a->count > b->count; });
  const Region* a = by_size[0];
  const Region* b = by_size[1];
  if (b->centroid_col < a->centroid_col) std::swap(a, b);

  // side_of[id] is 0 for left, 1 for right.
  std::vector<int> side_of(lr.regions.size() + 1, 0);
  for (const auto& r : lr.regions) {
    if (r.id == a->id) {
      side_of[r.id] = 0;
    } else if (r.id == b->id) {
      side_of[r.id] = 1;
    } else {
      const double da = std::hypot(r.centroid_row - a->centroid_row, r.centroid_col - a->centroid_col);
      const double db = std::hypot(r.centroid_row - b->centroid_row, r.centroid_col - b->centroid_col);
      side_of[r.id] = db < da ? 1 : 0;
    }
  }
  for (std::size_t i = 0; i < lung.size(); ++i) {
    if (const auto id = lr.labels[i]) (side_of[id] ? sides.right : sides.left).set(i, true);
  }
  return sides;
}

LungPercentages per_lung_percentages(const BinaryMask& infection, const BinaryMask& lung) {
  check_same(infection, lung, "per_lung_percentages");
  const LungSides sides = split_lungs(lung);
  return {side_stats(infection, sides.left), side_stats(infection, sides.right)};
}

QuantReport quantify(const BinaryMask& infection, const BinaryMask& lung, const std::string& case_id,
                     const std::string& timestamp) {
  check_same(infection, lung, "quantify");
  QuantReport r;
  r.case_id = case_id;
  r.timestamp = timestamp;
  r.detection = detect(infection);
  r.lung_pixels = lung.count();
  r.infection_pixels = infection.count();
  if (r.lung_pixels == 0) {
    r.status = "no_lung_detected";
    r.left.absent = r.right.absent = true;
    return r;
  }
  r.overall_pct = infection_percentage(infection, lung);
  const LungPercentages p = per_lung_percentages(infection, lung);
  r.left = p.left;
  r.right = p.right;
  return r;
}

nlohmann::json to_json(const QuantReport& r) {
  auto side = [](const SideStats& s) {
    return nlohmann::json{{"pct", s.pct},
                                  {"lung_pixels", s.lung_pixels},
                                  {"infection_pixels", s.infection_pixels},
                                  {"absent", s.absent}};
  };
  nlohmann::json j{{"case_id", r.case_id},
                           {"timestamp", r.timestamp},
                           {"status", r.status},
                           {"detection", detection_name(r.detection)},
                           {"overall_pct", r.overall_pct},
                           {"left_pct", r.left.pct},
                           {"right_pct", r.right.pct},
                           {"lung_pixels", r.lung_pixels},
                           {"infection_pixels", r.infection_pixels},
                           {"image_left", side(r.left)},
                           {"image_right", side(r.right)}};
  return j;
}

}  // namespace cxrseg
