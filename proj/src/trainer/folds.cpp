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
#include <random>

#include "cxrseg/trainer.hpp"

namespace cxrseg {
namespace {

void append(std::vector<std::string>& out, const std::vector<std::string>& ids) {
  out.insert(out.end(), ids.begin(), ids.end());
}

}  // namespace

std::vector<std::string> FoldPlan::test_ids() const {
  std::vector<std::string> out;
  for (const auto& [_, ids] : test) append(out, ids);
  return out;
}

std::vector<std::string> FoldPlan::val_ids(std::size_t fold) const {
  if (fold >= k) throw UsageError("fold " + std::to_string(fold) + " out of range for k=" + std::to_string(k));
  std::vector<std::string> out;
  for (const auto& [_, lists] : folds) append(out, lists[fold]);
  return out;
}

std::vector<std::string> FoldPlan::train_ids(std::size_t fold) const {
  if (fold >= k) throw UsageError("fold " + std::to_string(fold) + " out of range for k=" + std::to_string(k));
  std::vector<std::string> out;
  for (const auto& [c, lists] : folds) {
    for (std::size_t f = 0; f < lists.size(); ++f) {
      if (f != fold) append(out, lists[f]);
    }
    if (auto it = always_train.find(c); it != always_train.end()) append(out, it->second);
  }
  for (const auto& [c, ids] : always_train) {
    if (!folds.contains(c)) append(out, ids);
  }
  return out;
}

std::map<SampleClass, FoldPlan::ClassCounts> FoldPlan::counts(std::size_t fold) const {
  if (fold >= k) throw UsageError("fold " + std::to_string(fold) + " out of range for k=" + std::to_string(k));
  std::map<SampleClass, ClassCounts> out;
  for (const auto& [c, ids] : test) out[c].test += ids.size();
  for (const auto& [c, lists] : folds) {
    for (std::size_t f = 0; f < lists.size(); ++f) (f == fold ? out[c].val : out[c].train) += lists[f].size();
  }
  for (const auto& [c, ids] : always_train) out[c].train += ids.size();
  for (auto& [_, cc] : out) cc.total = cc.train + cc.val + cc.test;
  return out;
}

FoldPlan make_fold_plan(const std::vector<DatasetRecord>& manifest, double test_fraction, std::size_t k,
                        std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0,1)");
  if (k == 0) throw ConfigError("k must be positive");

  const bool tagged = std::any_of(manifest.begin(), manifest.end(), [](const auto& r) { return r.split.has_value(); });
  FoldPlan plan;

  if (tagged) {
    std::size_t max_fold = 0;
    bool any_fold = false;
    for (const auto& r : manifest) {
      if (!r.split) throw ConfigError("record " + r.id + " has no split while others do");
      if (r.fold) {
        any_fold = true;
        max_fold = std::max(max_fold, *r.fold);
      }
    }
    plan.k = any_fold ? max_fold + 1 : 1;
    for (const auto& r : manifest) {
      auto& lists = plan.folds[r.sample_class];
      lists.resize(plan.k);
      if (*r.split == Split::test) {
        plan.test[r.sample_class].push_back(r.id);
      } else if (any_fold && r.fold) {
        lists[*r.fold].push_back(r.id);
      } else if (!any_fold && *r.split == Split::val) {
        lists[0].push_back(r.id);
      } else {
        plan.always_train[r.sample_class].push_back(r.id);
      }
    }
    return plan;
  }

  plan.k = k;
  std::map<SampleClass, std::vector<std::string>> by_class;
  for (const auto& r : manifest) by_class[r.sample_class].push_back(r.id);
  std::mt19937_64 rng(seed);
  for (auto& [c, ids] : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(ids.size())));
    auto& test = plan.test[c];
    if (ids.size() - n_test < k) {
      throw ConfigError("class " + class_name(c) + " has " + std::to_string(ids.size() - n_test) +
                        " non-test item(s), fewer than k=" + std::to_string(k));
    }
    test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    auto& lists = plan.folds[c];
    lists.resize(k);
    for (std::size_t i = n_test; i < ids.size(); ++i) lists[(i - n_test) % k].push_back(ids[i]);
  }
  return plan;
}

}  // namespace cxrseg
