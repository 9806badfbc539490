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

#include "cxrseg/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cxrseg;

TEST_CASE("confusion counts") {
  const std::vector<std::uint8_t> gt{1, 1, 0, 0}, pred{1, 0, 0, 0};
  const ConfusionCounts c = confusion(pred, gt);
  CHECK(c == ConfusionCounts{1, 2, 0, 1});
  std::vector<std::uint8_t> g(16, 0), inv(16, 1);
  for (int i = 0; i < 10; ++i) {
    g[i] = 1;
    inv[i] = 0;
  }
  CHECK(confusion(g, g) == ConfusionCounts{10, 6, 0, 0});
  const ConfusionCounts comp = confusion(inv, g);
  CHECK(comp.tp == 0);
  CHECK(comp.tn == 0);
  CHECK_THROWS_AS(confusion(std::vector<std::uint8_t>(3), std::vector<std::uint8_t>(4)), DimensionError);
  CHECK_THROWS_AS(confusion(BinaryMask(2, 3), BinaryMask(3, 2)), DimensionError);
}

TEST_CASE("segmentation metrics") {
  const SegMetrics m = seg_metrics({1, 2, 0, 1});
  CHECK(m.accuracy == doctest::Approx(0.75));
  CHECK(m.iou == doctest::Approx(0.5));
  CHECK(m.dsc == doctest::Approx(2.0 / 3.0));
  const SegMetrics empty = seg_metrics({0, 9, 0, 0});
  CHECK(empty.iou == 1.0);
  CHECK(empty.dsc == 1.0);
  CHECK_THROWS_AS(seg_metrics({}), UsageError);
}

TEST_CASE("segmentation metrics agree with the count oracle; dsc = 2 iou / (1 + iou)") {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 1000; ++trial) {
    const BinaryMask p = cxrseg::testing::random_mask(rng, 12, 12), g = cxrseg::testing::random_mask(rng, 12, 12);
    const SegMetrics m = seg_metrics(confusion(p, g));
    const auto o = oracle::count(p.values(), g.values());
    CHECK(std::abs(m.accuracy - oracle::accuracy(o)) <= 1e-12);
    CHECK(std::abs(m.iou - oracle::iou(o)) <= 1e-12);
    CHECK(std::abs(m.dsc - oracle::dsc(o)) <= 1e-12);
    CHECK(std::abs(m.dsc - 2 * m.iou / (1 + m.iou)) <= 1e-12);
    CHECK(m.dsc >= m.iou);
  }
}

TEST_CASE("detection metrics") {
  const DetMetrics m = det_metrics({8, 8, 2, 2});
  CHECK(*m.precision == doctest::Approx(0.8));
  CHECK(*m.sensitivity == doctest::Approx(0.8));
  CHECK(*m.f1 == doctest::Approx(0.8));
  CHECK(*m.specificity == doctest::Approx(0.8));
  CHECK(*m.accuracy == doctest::Approx(0.8));

  const DetMetrics perfect = det_metrics({583, 583, 0, 0});
  CHECK(*perfect.sensitivity == 1.0);
  CHECK(*perfect.specificity == 1.0);

  const DetMetrics no_pos = det_metrics({0, 5, 0, 0});
  CHECK_FALSE(no_pos.precision.has_value());
  CHECK_FALSE(no_pos.sensitivity.has_value());
  CHECK_FALSE(no_pos.f1.has_value());
  CHECK(*no_pos.specificity == 1.0);

  // All predictions wrong: precision 0, sensitivity undefined, F1 still 0.
  const DetMetrics all_wrong = det_metrics({0, 0, 3, 0});
  CHECK(*all_wrong.precision == 0.0);
  CHECK_FALSE(all_wrong.sensitivity.has_value());
  CHECK(*all_wrong.f1 == 0.0);
}

TEST_CASE("confidence radius") {
  auto r = [](double m, std::size_t n) { return confidence_radius(m, CIParams{n, 1.96}); };
  CHECK(std::round(r(0.9611, 6788) * 1e4) / 1e4 == doctest::Approx(0.0046));
  CHECK(std::round(r(0.8305, 1166) * 1e4) / 1e4 == doctest::Approx(0.0215));
  CHECK(r(1.0, 1166) == 0.0);
  CHECK(r(0.0, 10) == 0.0);
  CHECK(r(0.5, 100) > r(0.4, 100));
  CHECK(r(0.5, 100) > r(0.6, 100));
  CHECK_THROWS_AS(r(1.2, 10), UsageError);
  CHECK_THROWS_AS(r(0.5, 0), UsageError);
}

TEST_CASE("evaluate_run for masks") {
  std::map<std::string, BinaryMask> gt{{"a", BinaryMask(2, 2, {1, 1, 0, 0})}, {"b", BinaryMask(2, 2, {0, 0, 0, 1})}};
  const MetricsReport perfect = evaluate_run(gt, gt, Task::lung_segmentation);
  for (const auto& m : perfect.metrics) {
    CHECK(*m.value == 1.0);
    CHECK(m.radius == 0.0);
  }

  std::map<std::string, BinaryMask> pred{{"a", BinaryMask(2, 2, {1, 0, 0, 0})}, {"b", BinaryMask(2, 2, {0, 0, 0, 0})}};
  const MetricsReport micro = evaluate_run(pred, gt, Task::infection_segmentation);
  CHECK(micro.counts == ConfusionCounts{1, 5, 0, 2});
  CHECK(*micro.metric("dsc").value == doctest::Approx(0.5));
  CHECK(micro.metric("dsc").radius == doctest::Approx(confidence_radius(0.5, CIParams{2})));
  const MetricsReport macro = evaluate_run(pred, gt, Task::infection_segmentation, Averaging::macro);
  CHECK(*macro.metric("dsc").value == doctest::Approx((2.0 / 3.0 + 0.0) / 2.0));

  pred.erase("b");
  pred["c"] = BinaryMask(2, 2);
  try {
    evaluate_run(pred, gt, Task::lung_segmentation);
    FAIL("expected an alignment error");
  } catch (const AlignmentError& e) {
    CHECK(e.ids() == std::vector<std::string>{"c", "b"});
  }
}

TEST_CASE("evaluate_run for detection labels and the report table") {
  std::map<std::string, std::uint8_t> gt, pred;
  for (int i = 0; i < 20; ++i) {
    gt["s" + std::to_string(i)] = i < 10;
    pred["s" + std::to_string(i)] = (i < 8) || (i >= 10 && i < 12);
  }
  MetricsReport r = evaluate_run(pred, gt);
  CHECK(r.counts == ConfusionCounts{8, 8, 2, 2});
  CHECK(*r.metric("f1").value == doctest::Approx(0.8));
  CHECK_THROWS_AS(r.metric("auc"), NotFoundError);
  r.model = "U-Net";
  r.encoder = "mini";
  const std::string table = format_table({r});
  CHECK(table.find("80.00 ± 17.53") != std::string::npos);
  CHECK(table.find("U-Net") != std::string::npos);
  const auto j = to_json(r);
  CHECK(j["metrics"]["precision"]["value"].get<double>() == doctest::Approx(0.8));
  CHECK(j["n"] == 20);
}
