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

// Four-stage annotation workflow.
//
// Every mutation is validated against the current state, applied, and
// appended to a JSON Lines event log with a monotone sequence number. Events
// carry their outcomes (sampled ids, masks, timestamps), so replaying a log
// needs no models and no random generator.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cxrseg/errors.hpp"
#include "cxrseg/mask.hpp"

namespace cxrseg {

enum class Stage { I = 1, II = 2, III = 3, IV = 4 };

enum class ItemStatus {
  unannotated,  // in the pool, never shown to a reviewer
  pending,      // awaiting a decision (or a Stage III selection)
  accepted,
  rejected_pending_edit,
  modified,
  unsure_pending_md,
  excluded,
  denied,
  verified,
};

enum class Decision { accept, reject, unsure, exclude };

std::string stage_name(Stage s);
std::string status_name(ItemStatus s);
ItemStatus parse_status(const std::string& name);
std::string decision_name(Decision d);
Decision parse_decision(const std::string& name);

bool is_terminal(ItemStatus s);
bool in_repository(ItemStatus s);

struct ReviewItem {
  std::string id;
  std::string image;
  std::string group;  // class label used for stratified sampling
  ItemStatus status = ItemStatus::unannotated;
  std::size_t round = 0;
  std::string reviewer;
  std::string md_note;
  std::optional<BinaryMask> mask;
  std::vector<BinaryMask> proposals;  // Stage III, registry order
  std::optional<std::size_t> chosen;  // 1-based Stage III choice
  std::size_t reroutes = 0;
  bool verification_pending = false;
  std::vector<std::pair<std::string, ItemStatus>> history;  // (timestamp, status entered)

  friend bool operator==(const ReviewItem&, const ReviewItem&) = default;
};

struct WorkflowConfig {
  std::size_t batch_size = 500;
  std::size_t stage2_budget = 3000;  // items drawn for review in Stage II
  double verification_fraction = 0.2;
  bool fine_tune = true;  // retrain jobs start from the current weights
  std::uint64_t seed = 0;

  void validate() const;
};

struct WorkflowState {
  Stage stage = Stage::I;
  std::map<std::string, ReviewItem> items;
  std::set<std::string> repository;
  std::size_t round = 0;
  std::vector<std::string> batch;  // current round
  bool batch_open = false;
  std::size_t stage2_drawn = 0;
  std::vector<std::string> candidates;  // Stage I
  std::vector<std::string> models;      // Stage III registry
  std::vector<std::size_t> tallies;     // per Stage III model
  std::string champion;
  std::vector<std::string> verification;
  std::uint64_t last_seq = 0;

  /// Validates and applies one event. Nothing changes when it throws.
  void apply(const nlohmann::json& event);

  friend bool operator==(const WorkflowState&, const WorkflowState&) = default;
};

nlohmann::json to_json(const WorkflowState& state);
WorkflowState state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ReviewItem& item);

nlohmann::json mask_to_rle(const BinaryMask& mask);
BinaryMask mask_from_rle(const nlohmann::json& j);

// ---- event log ----------------------------------------------------------

/// Append-only JSON Lines file; each line is flushed before append returns.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);
  void append(const nlohmann::json& event);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Reads every event; malformed lines raise ParseError with the line number.
std::vector<nlohmann::json> read_events(const std::filesystem::path& path);

/// Folds events into a state, optionally starting from a snapshot.
WorkflowState replay(const std::vector<nlohmann::json>& events, WorkflowState start = {});

// ---- engine -------------------------------------------------------------

struct NewItem {
  std::string id;
  std::string image;
  std::string group;
};

struct CandidateScore {
  std::string model;
  double dsc = 0.0;
};

struct RetrainJob {
  std::size_t round = 0;
  std::vector<std::string> dataset;  // repository ids, sorted
  bool fine_tune = true;
};

struct Progress {
  Stage stage = Stage::I;
  std::size_t round = 0;
  std::string champion;
  std::size_t repository = 0;
  std::map<std::string, std::size_t> status_counts;
  std::vector<std::size_t> tallies;
  std::uint64_t events = 0;
};

nlohmann::json to_json(const Progress& p);

using MaskProvider = std::function<BinaryMask(const std::string& id)>;
using ProposalProvider = std::function<std::vector<BinaryMask>(const std::string& id)>;
using Clock = std::function<std::string()>;

/// ISO-8601 UTC wall clock.
std::string utc_now();

/// Index of the largest value; ties go to the lower index.
std::size_t argmax_first(const std::vector<double>& values);

class Workflow {
 public:
  /// Replays `log_path` when it exists (after `snapshot` if given) and
  /// appends new events to it. An empty path keeps the log in memory only.
  explicit Workflow(WorkflowConfig config = {}, std::filesystem::path log_path = {}, Clock clock = utc_now,
                    std::optional<WorkflowState> snapshot = std::nullopt);

  const WorkflowConfig& config() const noexcept { return config_; }

  void add_items(const std::vector<NewItem>& items);

  std::string stage1_select(const std::vector<CandidateScore>& candidates);

  /// Draws min(batch_size, pool) items; `provider` attaches inferred masks.
  std::vector<std::string> next_batch(std::optional<std::size_t> batch_size = std::nullopt,
                                      const MaskProvider& provider = {});
  ReviewItem submit_decision(const std::string& id, Decision decision, const std::optional<BinaryMask>& edited,
                             const std::string& reviewer);
  ReviewItem md_resolve(const std::string& id, const std::string& note, const BinaryMask& adjusted,
                        const std::string& reviewer);
  RetrainJob finalize_round();

  void begin_stage3(const std::vector<std::string>& models);
  std::size_t stage3_propose(const std::vector<std::string>& ids, const ProposalProvider& provider);
  /// choice is 1..6; nullopt denies.
  ReviewItem stage3_select(const std::string& id, std::optional<std::size_t> choice, const std::string& reviewer);
  std::string stage3_champion() const;

  void begin_stage4();
  std::vector<std::string> stage4_sample(std::optional<double> fraction = std::nullopt,
                                         std::optional<std::uint64_t> seed = std::nullopt);
  ReviewItem stage4_verify(const std::string& id, const std::string& reviewer,
                           const std::optional<BinaryMask>& adjusted = std::nullopt);

  WorkflowState state() const;
  ReviewItem item(const std::string& id) const;
  std::vector<ReviewItem> queue(std::size_t limit) const;
  Progress progress() const;
  void save_snapshot(const std::filesystem::path& path) const;

 private:
  nlohmann::json commit(nlohmann::json event);

  WorkflowConfig config_;
  Clock clock_;
  std::optional<EventLog> log_;
  mutable std::mutex mu_;
  WorkflowState state_;
};

}  // namespace cxrseg
