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

// Scripted and randomized workflow sessions shared by the unit tests and the
// acceptance binary.

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cxrseg/workflow.hpp"

namespace cxrseg::testing {

inline BinaryMask tiny_mask(std::mt19937_64& rng) {
  BinaryMask m(6, 6);
  std::bernoulli_distribution on(0.4);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, on(rng));
  return m;
}

inline std::string item_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cxr%05zu", i);
  return buf;
}

/// A counter clock so logs do not depend on wall time.
inline Clock counter_clock() {
  auto n = std::make_shared<std::size_t>(0);
  return [n] { return "t" + std::to_string((*n)++); };
}

/// Runs every stage end to end with random reviewer behavior: Stage II rounds
/// mixing all four decisions, Stage III selections with some denials and
/// their manual re-review, and Stage IV verification of the sample.
inline void run_full_session(Workflow& wf, std::size_t n_items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NewItem> items;
  const char* groups[] = {"covid", "non_covid", "normal"};
  for (std::size_t i = 0; i < n_items; ++i) items.push_back({item_id(i), item_id(i) + ".png", groups[i % 3]});
  wf.add_items(items);
  wf.stage1_select({{"unet", 0.95}, {"unetpp", 0.96}, {"fpn", 0.94}});

  const MaskProvider infer = [&](const std::string&) { return tiny_mask(rng); };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto review = [&](const std::vector<std::string>& batch) {
    std::vector<std::string> unsure, rejected;
    for (const auto& id : batch) {
      const double x = u(rng);
      if (x < 0.55) {
        wf.submit_decision(id, Decision::accept, std::nullopt, "r1");
      } else if (x < 0.65) {
        wf.submit_decision(id, Decision::reject, tiny_mask(rng), "r2");
      } else if (x < 0.75) {
        wf.submit_decision(id, Decision::reject, std::nullopt, "r2");
        rejected.push_back(id);
      } else if (x < 0.9) {
        wf.submit_decision(id, Decision::unsure, std::nullopt, "r1");
        unsure.push_back(id);
      } else {
        wf.submit_decision(id, Decision::exclude, std::nullopt, "r3");
      }
    }
    for (const auto& id : rejected) wf.submit_decision(id, Decision::reject, tiny_mask(rng), "r2");
    for (const auto& id : unsure) wf.md_resolve(id, "md note for " + id, tiny_mask(rng), "md1");
    wf.finalize_round();
  };

  for (;;) {
    const auto batch = wf.next_batch(std::nullopt, infer);
    if (batch.empty()) break;
    review(batch);
  }

  wf.begin_stage3({"m1", "m2", "m3", "m4", "m5", "m6"});
  std::vector<std::string> rest;
  for (const auto& [id, item] : wf.state().items) {
    if (item.status == ItemStatus::unannotated) rest.push_back(id);
  }
  wf.stage3_propose(rest, [&](const std::string&) {
    std::vector<BinaryMask> six;
    for (int k = 0; k < 6; ++k) six.push_back(tiny_mask(rng));
    return six;
  });
  std::discrete_distribution<std::size_t> pick({5, 1, 3, 1, 2, 1});
  for (const auto& id : rest) {
    if (u(rng) < 0.05) {
      wf.stage3_select(id, std::nullopt, "r1");
    } else {
      wf.stage3_select(id, pick(rng) + 1, "r1");
    }
  }
  for (;;) {
    const auto batch = wf.next_batch(std::nullopt, infer);
    if (batch.empty()) break;
    review(batch);
  }

  wf.begin_stage4();
  for (const auto& id : wf.stage4_sample()) {
    wf.stage4_verify(id, "md2", u(rng) < 0.1 ? std::optional(tiny_mask(rng)) : std::nullopt);
  }
}

/// Fires `steps` random operations (many of them invalid) at a fresh
/// workflow logging to `log`. After every call it checks that a rejected
/// operation changed nothing, that the repository only grows, that terminal
/// items stay terminal and that tallies match selections. Finally the log is
/// replayed and compared with the live state. Returns the first violation,
/// or an empty string.
inline std::string fuzz_workflow(std::uint64_t seed, std::size_t steps, const std::filesystem::path& log) {
  WorkflowConfig cfg;
  cfg.batch_size = 6;
  cfg.stage2_budget = 20;
  cfg.seed = seed;
  Workflow wf(cfg, log, counter_clock());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> op(0, 13);
  std::uniform_int_distribution<std::size_t> any_id(0, 34), choice(0, 7);
  std::vector<NewItem> items;
  for (std::size_t i = 0; i < 30; ++i) items.push_back({item_id(i), "", i % 2 ? "a" : "b"});
  wf.add_items(items);
  const auto six = [](const std::string&) { return std::vector<BinaryMask>(6, BinaryMask(6, 6, 1)); };

  WorkflowState prev = wf.state();
  for (std::size_t step = 0; step < steps; ++step) {
    const std::string id = item_id(any_id(rng));
    bool ok = true;
    try {
      switch (op(rng)) {
        case 0: wf.stage1_select({{"a", 0.5}, {"b", 0.6}}); break;
        case 1: wf.next_batch(); break;
        case 2:
        case 3: wf.submit_decision(id, Decision::accept, std::nullopt, "r"); break;
        case 4: wf.submit_decision(id, Decision::reject, tiny_mask(rng), "r"); break;
        case 5: wf.submit_decision(id, Decision::reject, std::nullopt, "r"); break;
        case 6: wf.submit_decision(id, Decision::unsure, std::nullopt, "r"); break;
        case 7: wf.submit_decision(id, Decision::exclude, std::nullopt, "r"); break;
        case 8: wf.md_resolve(id, "n", tiny_mask(rng), "md"); break;
        case 9: wf.finalize_round(); break;
        case 10: wf.begin_stage3({"m1", "m2", "m3", "m4", "m5", "m6"}); break;
        case 11: wf.stage3_propose({id}, six); break;
        case 12: {
          const std::size_t c = choice(rng);
          wf.stage3_select(id, c == 0 ? std::nullopt : std::optional(c), "r");
          break;
        }
        default:
          if (step % 3 == 0) {
            wf.begin_stage4();
          } else if (step % 3 == 1) {
            wf.stage4_sample();
          } else {
            wf.stage4_verify(id, "md");
          }
          break;
      }
    } catch (const Error&) {
      ok = false;
    }
    const WorkflowState now = wf.state();
    const std::string at = " (seed " + std::to_string(seed) + ", step " + std::to_string(step) + ")";
    if (!ok) {
      if (!(now == prev)) return "a rejected operation changed the state" + at;
      continue;
    }
    if (now.last_seq == prev.last_seq) {
      // An empty draw succeeds without logging anything.
      if (!(now == prev)) return "an unlogged operation changed the state" + at;
      continue;
    }
    if (now.last_seq != prev.last_seq + 1) return "an accepted operation appended more than one event" + at;
    if (static_cast<int>(now.stage) < static_cast<int>(prev.stage)) return "stage went backwards" + at;
    if (!std::includes(now.repository.begin(), now.repository.end(), prev.repository.begin(), prev.repository.end())) {
      return "repository shrank" + at;
    }
    for (const auto& [iid, item] : prev.items) {
      const ItemStatus after = now.items.at(iid).status;
      if (!is_terminal(item.status)) continue;
      const bool verified_step = after == ItemStatus::verified && in_repository(item.status);
      if (after != item.status && !verified_step) return "terminal item " + iid + " changed status" + at;
    }
    for (const auto& rid : now.repository) {
      if (!in_repository(now.items.at(rid).status)) return "repository holds non-final item " + rid + at;
    }
    std::size_t selections = 0, sum = 0;
    for (const auto& [iid, item] : now.items) selections += item.chosen.has_value();
    for (auto t : now.tallies) sum += t;
    if (sum != selections) return "tallies do not match selections" + at;
    const std::size_t stage_rank = static_cast<std::size_t>(now.stage);
    if (stage_rank > static_cast<std::size_t>(prev.stage) + 1) return "a stage was skipped" + at;
    prev = now;
  }
  if (!(replay(read_events(log)) == wf.state())) return "replay differs from the live state (seed " + std::to_string(seed) + ")";
  return {};
}

}  // namespace cxrseg::testing
