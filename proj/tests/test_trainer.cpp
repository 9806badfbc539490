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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cxrseg/trainer.hpp"
#include "fixtures.hpp"

using namespace cxrseg;

namespace {

Tensor random_probs(std::size_t n, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  Tensor p({n, 2, h, w}, DType::f64);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < h * w; ++i) {
      const double fg = u(rng);
      p.set((b * 2 + 0) * h * w + i, 1.0 - fg);
      p.set((b * 2 + 1) * h * w + i, fg);
    }
  }
  return p;
}

std::vector<std::uint8_t> random_labels(std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution on(0.4);
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = on(rng) ? 1 : 0;
  return y;
}

DatasetRecord rec(const std::string& id, SampleClass c) {
  DatasetRecord r;
  r.id = id;
  r.image = id + ".pgm";
  r.sample_class = c;
  return r;
}

SegDataset toy_dataset(std::size_t n, std::size_t side, std::uint64_t seed) {
  SegDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample s = synth_sample(SampleClass::normal, side, seed + i, "t");
    d.push_back({s.image, s.lung});
  }
  return d;
}

}  // namespace

TEST_CASE("cross-entropy matches the mean negative log-likelihood") {
  std::mt19937_64 rng(1);
  const Tensor p = random_probs(2, 3, 4, rng);
  const auto y = random_labels(24, rng);
  double expect = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 12; ++i) {
      const std::size_t k = b * 12 + i;
      expect -= std::log(p.at((b * 2 + y[k]) * 12 + i));
    }
  }
  expect /= 24.0;
  CHECK(ce_loss_value(p, y) == doctest::Approx(expect).epsilon(1e-12));
  Tape tape;
  CHECK(ce_loss(tape.constant(p), y).value().at(0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cross-entropy clamps zero probabilities") {
  Tensor p({1, 2, 1, 2}, std::vector<double>{1.0, 0.5, 0.0, 0.5}, DType::f64);
  const std::vector<std::uint8_t> y{1, 1};
  const double v = ce_loss_value(p, y);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx((-std::log(1e-12) - std::log(0.5)) / 2.0));
  CHECK_THROWS_AS(ce_loss_value(p, std::vector<std::uint8_t>{1}), DimensionError);
}

TEST_CASE("gradient of cross-entropy after softmax is (p - y) / count") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.5);
  Tensor logits({2, 2, 3, 3}, DType::f64);
  for (std::size_t i = 0; i < logits.numel(); ++i) logits.set(i, g(rng));
  const auto y = random_labels(18, rng);
  Tape tape;
  Var x = tape.leaf(logits, true);
  Var p = softmax2(x);
  auto grads = backward(tape, ce_loss(p, y));
  const Tensor& gx = grads.at(x.id);
  const Tensor& pv = p.value();
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 9; ++i) {
        const std::size_t at = (b * 2 + c) * 9 + i;
        const double target = y[b * 9 + i] == c ? 1.0 : 0.0;
        CHECK(gx.at(at) == doctest::Approx((pv.at(at) - target) / 18.0).epsilon(1e-9));
      }
    }
  }
  const double err = finite_diff_check([&](Var v) { return ce_loss(softmax2(v), y); }, logits);
  CHECK(err < 1e-6);
}

TEST_CASE("one Adam step matches the closed form") {
  TrainConfig cfg;
  cfg.alpha = 0.01;
  ParamList params{{"w", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}, DType::f64)}};
  const std::vector<double> g{0.3, -0.1, 0.0};
  std::map<std::string, Tensor> grads{{"w", Tensor({3}, g, DType::f64)}};
  OptimizerState st;
  st.m = {Tensor::filled({3}, 0.0, DType::f64)};
  st.v = {Tensor::filled({3}, 0.0, DType::f64)};
  st.lr = cfg.alpha;

  std::vector<double> w{1.0, -2.0, 0.5}, m(3, 0.0), v(3, 0.0);
  for (int t = 1; t <= 3; ++t) {
    adam_step(params, grads, st, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t)), vh = v[i] / (1.0 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(st.t == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(params[0].second.at(i) == doctest::Approx(w[i]).epsilon(1e-12));
  // The first step moves each parameter with nonzero gradient by about alpha.
  CHECK(std::abs(w[0] - 1.0) == doctest::Approx(0.03).epsilon(1e-6));

  std::map<std::string, Tensor> none;
  CHECK_THROWS_AS(adam_step(params, none, st, cfg), UsageError);
  std::map<std::string, Tensor> wrong{{"w", Tensor({2}, DType::f64)}};
  CHECK_THROWS_AS(adam_step(params, wrong, st, cfg), DimensionError);
}

TEST_CASE("optimizer state starts at zero with lr alpha") {
  ModelConfig mc;
  mc.depth = 2;
  mc.base_channels = 4;
  const SegModel model = build_model(mc, 0);
  TrainConfig cfg;
  const auto st = make_optimizer_state(model, cfg);
  CHECK(st.lr == 1e-4);
  CHECK(st.t == 0);
  REQUIRE(st.m.size() == model.params().size());
  for (const auto& m : st.m) CHECK(std::all_of(m.to_vector().begin(), m.to_vector().end(), [](double x) { return x == 0; }));
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](TrainConfig& c) { c.alpha = 0; });
  bad([](TrainConfig& c) { c.beta1 = 1.0; });
  bad([](TrainConfig& c) { c.beta2 = -0.1; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.plateau_factor = 1.0; });
  bad([](TrainConfig& c) { c.early_stop_patience = 0; });
}

TEST_CASE("plateau schedule divides lr by five after three flat epochs and stops after eight") {
  TrainConfig cfg;
  OptimizerState st;
  st.lr = cfg.alpha;
  CHECK(plateau_update(st, 1.0, cfg).improved);
  CHECK(plateau_update(st, 0.9, cfg).improved);
  std::vector<double> lrs;
  std::size_t stop_at = 0;
  for (std::size_t e = 1; e <= 20 && stop_at == 0; ++e) {
    const auto ev = plateau_update(st, 0.95, cfg);
    CHECK_FALSE(ev.improved);
    CHECK(ev.lr_reduced == (e % 3 == 0));
    lrs.push_back(st.lr);
    if (early_stop_check(st, cfg)) stop_at = e;
  }
  CHECK(stop_at == 8);
  CHECK(lrs[1] == doctest::Approx(1e-4));
  CHECK(lrs[2] == doctest::Approx(2e-5));
  CHECK(lrs[5] == doctest::Approx(4e-6));
  CHECK(lrs[7] == doctest::Approx(4e-6));
  // An improvement resets both counters but keeps the reduced rate.
  const auto ev = plateau_update(st, 0.5, cfg);
  CHECK(ev.improved);
  CHECK(st.stale_epochs == 0);
  CHECK(st.plateau_counter == 0);
  CHECK(st.lr == doctest::Approx(4e-6));
  CHECK_FALSE(early_stop_check(st, cfg));
}

TEST_CASE("untagged fold plan holds out a fifth per class and partitions the rest") {
  std::vector<DatasetRecord> m;
  const std::size_t per[3] = {53, 21, 40};
  const SampleClass cls[3] = {SampleClass::covid, SampleClass::non_covid, SampleClass::normal};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per[c]; ++i) m.push_back(rec(class_name(cls[c]) + std::to_string(i), cls[c]));
  }
  const FoldPlan plan = make_fold_plan(m, 0.2, 5, 3);
  CHECK(plan.k == 5);
  const auto test = plan.test_ids();
  CHECK(test.size() == 11 + 4 + 8);
  std::set<std::string> test_set(test.begin(), test.end());
  CHECK(test_set.size() == test.size());

  std::multiset<std::string> all_val;
  for (std::size_t f = 0; f < 5; ++f) {
    const auto val = plan.val_ids(f), tr = plan.train_ids(f);
    std::set<std::string> vs(val.begin(), val.end()), ts(tr.begin(), tr.end());
    CHECK(vs.size() + ts.size() + test_set.size() == m.size());
    for (const auto& id : val) {
      CHECK_FALSE(ts.count(id));
      CHECK_FALSE(test_set.count(id));
      all_val.insert(id);
    }
    for (const auto& id : tr) CHECK_FALSE(test_set.count(id));
    const auto counts = plan.counts(f);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& cc = counts.at(cls[c]);
      CHECK(cc.total == per[c]);
      CHECK(cc.train + cc.val + cc.test == cc.total);
    }
  }
  // Every non-test item validates exactly once.
  CHECK(all_val.size() == m.size() - test.size());
  for (const auto& id : all_val) CHECK(all_val.count(id) == 1);
  CHECK(make_fold_plan(m, 0.2, 5, 3).test_ids() == test);
  CHECK(make_fold_plan(m, 0.2, 5, 4).test_ids() != test);
  CHECK_THROWS_AS(plan.val_ids(5), UsageError);
}

TEST_CASE("ten items per class give folds of two, two, two, one, one") {
  std::vector<DatasetRecord> m;
  for (int i = 0; i < 10; ++i) m.push_back(rec("c" + std::to_string(i), SampleClass::covid));
  const FoldPlan plan = make_fold_plan(m, 0.2, 5, 1);
  CHECK(plan.test_ids().size() == 2);
  std::vector<std::size_t> sizes;
  for (std::size_t f = 0; f < 5; ++f) sizes.push_back(plan.val_ids(f).size());
  CHECK(sizes == std::vector<std::size_t>{2, 2, 2, 1, 1});
  m.resize(5);
  CHECK_THROWS_AS(make_fold_plan(m, 0.2, 5, 1), ConfigError);
}

TEST_CASE("tagged fold plan follows the manifest") {
  std::vector<DatasetRecord> m;
  for (int i = 0; i < 6; ++i) {
    auto r = rec("c" + std::to_string(i), SampleClass::covid);
    r.split = i < 2 ? Split::test : Split::train;
    if (i >= 2) r.fold = static_cast<std::size_t>(i % 2);
    m.push_back(r);
  }
  auto extra = rec("n0", SampleClass::normal);
  extra.split = Split::train;
  m.push_back(extra);
  const FoldPlan plan = make_fold_plan(m);
  CHECK(plan.k == 2);
  CHECK(plan.test_ids() == std::vector<std::string>{"c0", "c1"});
  auto v0 = plan.val_ids(0);
  std::sort(v0.begin(), v0.end());
  CHECK(v0 == std::vector<std::string>{"c2", "c4"});
  auto t0 = plan.train_ids(0);
  std::sort(t0.begin(), t0.end());
  CHECK(t0 == std::vector<std::string>{"c3", "c5", "n0"});

  m.push_back(rec("loose", SampleClass::normal));
  CHECK_THROWS_AS(make_fold_plan(m), ConfigError);
}

TEST_CASE("gradient through a whole model matches finite differences") {
  ModelConfig mc;
  mc.depth = 2;
  mc.base_channels = 4;
  for (Arch a : {Arch::unet, Arch::fpn}) {
    mc.arch = a;
    const SegModel model = build_model(mc, 5, DType::f64);
    std::mt19937_64 rng(6);
    Tensor x({1, 1, 4, 4}, DType::f64);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < x.numel(); ++i) x.set(i, u(rng));
    const auto y = random_labels(16, rng);
    std::vector<Tensor> inputs{x};
    for (const auto& [name, t] : model.params()) inputs.push_back(t);
    auto f = [&](std::span<const Var> v) {
      ModelBinding b;
      b.params.assign(v.begin() + 1, v.end());
      return ce_loss(softmax2(forward_logits(model, b, v[0])), y);
    };
    for (std::size_t which : {std::size_t{1}, std::size_t{2}, inputs.size() - 2, inputs.size() - 1}) {
      CHECK(finite_diff_check(f, inputs, which) < 1e-4);
    }
  }
}

TEST_CASE("training lowers the loss and restores the best epoch") {
  ModelConfig mc;
  mc.depth = 2;
  mc.base_channels = 4;
  SegModel model = build_model(mc, 1, DType::f32);
  const SegDataset tr = toy_dataset(6, 16, 100), val = toy_dataset(2, 16, 200);
  TrainConfig cfg;
  cfg.alpha = 3e-3;
  cfg.max_epochs = 12;
  cfg.seed = 2;
  std::size_t calls = 0;
  const auto before = evaluate_model(model, val);
  const TrainResult r = train(model, tr, val, cfg, [&](const EpochRecord&) { ++calls; });
  CHECK(calls == r.history.size());
  CHECK(r.history.front().epoch == 1);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
  const auto best = std::min_element(r.history.begin(), r.history.end(),
                                     [](const EpochRecord& a, const EpochRecord& b) { return a.val_loss < b.val_loss; });
  CHECK(r.best_epoch == best->epoch);
  const auto after = evaluate_model(model, val);
  CHECK(after.loss == doctest::Approx(best->val_loss).epsilon(1e-5));
  CHECK(after.loss < before.loss);
  SegModel again = build_model(mc, 1, DType::f32);
  train(again, tr, val, cfg);
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    CHECK(again.params()[i].second.bitwise_equal(model.params()[i].second));
  }
  CHECK_THROWS_AS(train(model, {}, val, cfg), UsageError);
}

TEST_CASE("targets parse by name") {
  CHECK(parse_target("lung") == MaskTarget::lung);
  CHECK(target_name(MaskTarget::infection) == "infection");
  CHECK_THROWS(parse_target("heart"));
}
