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
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>

#include "cxrseg/workflow.hpp"

namespace cxrseg {

using nlohmann::json;

namespace {

constexpr const char* kStatusNames[] = {"unannotated",           "pending",  "accepted",
                                        "rejected_pending_edit", "modified", "unsure_pending_md",
                                        "excluded",              "denied",   "verified"};
constexpr const char* kDecisionNames[] = {"accept", "reject", "unsure", "exclude"};

ReviewItem& find_item(std::map<std::string, ReviewItem>& items, const std::string& id) {
  auto it = items.find(id);
  if (it == items.end()) throw NotFoundError("unknown item '" + id + "'");
  return it->second;
}

void require_stage(const WorkflowState& s, std::initializer_list<Stage> allowed, const std::string& op) {
  if (std::find(allowed.begin(), allowed.end(), s.stage) != allowed.end()) return;
  throw StateError(op + " is not allowed in stage " + stage_name(s.stage));
}

void enter(ReviewItem& item, ItemStatus status, const std::string& ts) {
  item.status = status;
  item.history.emplace_back(ts, status);
}

std::optional<BinaryMask> optional_mask(const json& ev, const char* key) {
  if (!ev.contains(key) || ev[key].is_null()) return std::nullopt;
  return mask_from_rle(ev[key]);
}

// ---- per-event handlers: validate everything, then mutate ----

void on_items_added(WorkflowState& s, const json& ev, const std::string& ts) {
  require_stage(s, {Stage::I, Stage::II, Stage::III}, "adding items");
  std::set<std::string> seen;
  for (const auto& it : ev.at("items")) {
    const std::string id = it.at("id");
    if (id.empty()) throw UsageError("item id must not be empty");
    if (s.items.contains(id) || !seen.insert(id).second) throw UsageError("duplicate item id '" + id + "'");
  }
  for (const auto& it : ev.at("items")) {
    ReviewItem item;
    item.id = it.at("id");
    item.image = it.value("image", "");
    item.group = it.value("group", "");
    item.history.emplace_back(ts, ItemStatus::unannotated);
    s.items.emplace(item.id, std::move(item));
  }
}

void on_stage1_selected(WorkflowState& s, const json& ev) {
  require_stage(s, {Stage::I}, "stage1_select");
  std::vector<std::string> models;
  std::vector<double> scores;
  for (const auto& c : ev.at("candidates")) {
    models.push_back(c.at("model"));
    scores.push_back(c.at("dsc"));
  }
  if (models.empty()) throw UsageError("stage1_select needs at least one candidate");
  const std::string champion = models[argmax_first(scores)];
  if (ev.at("champion") != champion) throw StateError("recorded champion does not match the candidate scores");
  s.candidates = std::move(models);
  s.champion = champion;
  s.stage = Stage::II;
}

void on_batch_drawn(WorkflowState& s, const json& ev, const std::string& ts) {
  require_stage(s, {Stage::II, Stage::III}, "next_batch");
  if (s.batch_open) throw StateError("the current round must be finalized first", s.batch);
  const std::vector<std::string> ids = ev.at("ids");
  const json masks = ev.value("masks", json::object());
  std::set<std::string> seen;
  for (const auto& id : ids) {
    const ReviewItem& item = find_item(s.items, id);
    if (!seen.insert(id).second) throw UsageError("item '" + id + "' drawn twice");
    if (s.stage == Stage::II && item.status != ItemStatus::unannotated) {
      throw StateError("item '" + id + "' is not in the unannotated pool", {id});
    }
    if (s.stage == Stage::III && (item.status != ItemStatus::denied || item.reroutes > 0)) {
      throw StateError("item '" + id + "' is not a denied item awaiting manual review", {id});
    }
  }
  if (s.stage == Stage::II && s.stage2_drawn + ids.size() > ev.value("budget", s.stage2_drawn + ids.size())) {
    throw StateError("batch exceeds the Stage II budget");
  }
  std::vector<std::optional<BinaryMask>> decoded;
  for (const auto& id : ids) decoded.push_back(masks.contains(id) ? std::optional(mask_from_rle(masks[id])) : std::nullopt);

  for (std::size_t i = 0; i < ids.size(); ++i) {
    ReviewItem& item = s.items.at(ids[i]);
    item.round = s.round;
    item.mask = std::move(decoded[i]);
    if (s.stage == Stage::III) ++item.reroutes;
    enter(item, ItemStatus::pending, ts);
  }
  if (s.stage == Stage::II) s.stage2_drawn += ids.size();
  s.batch = ids;
  s.batch_open = !ids.empty();
}

void on_decision(WorkflowState& s, const json& ev, const std::string& ts) {
  require_stage(s, {Stage::II, Stage::III}, "submit_decision");
  ReviewItem& item = find_item(s.items, ev.at("id"));
  const Decision d = parse_decision(ev.at("decision"));
  std::optional<BinaryMask> edited = optional_mask(ev, "mask");
  const std::string reviewer = ev.value("reviewer", "");

  ItemStatus next;
  if (is_terminal(item.status)) {
    throw StateError("item '" + item.id + "' is already " + status_name(item.status), {item.id});
  } else if (item.status == ItemStatus::pending && !item.proposals.empty() && item.reroutes == 0) {
    throw StateError("item '" + item.id + "' awaits a Stage III selection", {item.id});
  } else if (item.status == ItemStatus::pending) {
    if (edited && d != Decision::reject) throw UsageError("an edited mask only accompanies a reject decision");
    switch (d) {
      case Decision::accept: next = ItemStatus::accepted; break;
      case Decision::reject: next = edited ? ItemStatus::modified : ItemStatus::rejected_pending_edit; break;
      case Decision::unsure: next = ItemStatus::unsure_pending_md; break;
      default: next = ItemStatus::excluded; break;
    }
  } else if (item.status == ItemStatus::rejected_pending_edit) {
    if (d != Decision::reject || !edited) {
      throw StateError("item '" + item.id + "' needs an edited mask to leave rejected_pending_edit", {item.id});
    }
    next = ItemStatus::modified;
  } else {
    throw StateError("item '" + item.id + "' is " + status_name(item.status) + ", not awaiting review", {item.id});
  }
  if (edited && item.mask && !edited->same_dims(*item.mask)) {
    throw DimensionError("edited mask size differs from the proposed mask");
  }

  if (edited) item.mask = std::move(edited);
  item.reviewer = reviewer;
  enter(item, next, ts);
  if (in_repository(next)) s.repository.insert(item.id);
}

void on_md_resolved(WorkflowState& s, const json& ev, const std::string& ts) {
  require_stage(s, {Stage::II, Stage::III}, "md_resolve");
  ReviewItem& item = find_item(s.items, ev.at("id"));
  if (item.status != ItemStatus::unsure_pending_md) {
    throw StateError("item '" + item.id + "' is " + status_name(item.status) + ", not unsure_pending_md", {item.id});
  }
  BinaryMask mask = mask_from_rle(ev.at("mask"));
  item.mask = std::move(mask);
  item.md_note = ev.value("note", "");
  item.reviewer = ev.value("reviewer", "");
  enter(item, ItemStatus::modified, ts);
  s.repository.insert(item.id);
}

void on_round_finalized(WorkflowState& s, const json& ev) {
  require_stage(s, {Stage::II, Stage::III}, "finalize_round");
  if (!s.batch_open) throw StateError("no open round to finalize");
  std::vector<std::string> open;
  for (const auto& id : s.batch) {
    if (!is_terminal(s.items.at(id).status)) open.push_back(id);
  }
  if (!open.empty()) {
    std::string msg = std::to_string(open.size()) + " item(s) of round " + std::to_string(s.round) +
                      " are not terminal:";
    for (const auto& id : open) msg += " " + id;
    throw StateError(msg, open);
  }
  if (ev.at("round") != s.round) throw StateError("round number mismatch");
  ++s.round;
  s.batch.clear();
  s.batch_open = false;
}

void on_stage3_started(WorkflowState& s, const json& ev) {
  require_stage(s, {Stage::II}, "begin_stage3");
  if (s.batch_open) throw StateError("the current round must be finalized first", s.batch);
  const std::vector<std::string> models = ev.at("models");
  if (models.size() != 6) throw ConfigError("Stage III needs exactly 6 models, got " + std::to_string(models.size()));
  if (std::set<std::string>(models.begin(), models.end()).size() != models.size()) {
    throw ConfigError("Stage III model ids must be distinct");
  }
  s.models = models;
  s.tallies.assign(models.size(), 0);
  s.stage = Stage::III;
}

void on_proposals_set(WorkflowState& s, const json& ev, const std::string& ts) {
  require_stage(s, {Stage::III}, "stage3_propose");
  if (s.models.size() != 6) throw ConfigError("Stage III needs exactly 6 registered models");
  std::vector<std::pair<std::string, std::vector<BinaryMask>>> decoded;
  for (const auto& [id, list] : ev.at("proposals").items()) {
    const ReviewItem& item = find_item(s.items, id);
    if (item.status != ItemStatus::unannotated) {
      throw StateError("item '" + id + "' is " + status_name(item.status) + ", not unannotated", {id});
    }
    if (list.size() != 6) throw ConfigError("item '" + id + "' needs 6 proposals, got " + std::to_string(list.size()));
    std::vector<BinaryMask> masks;
    for (const auto& m : list) masks.push_back(mask_from_rle(m));
    for (const auto& m : masks) {
      if (!m.same_dims(masks.front())) throw DimensionError("proposals of item '" + id + "' differ in size");
    }
    decoded.emplace_back(id, std::move(masks));
  }
  for (auto& [id, masks] : decoded) {
    ReviewItem& item = s.items.at(id);
    item.proposals = std::move(masks);
    item.round = s.round;
    enter(item, ItemStatus::pending, ts);
  }
}

void on_stage3_selected(WorkflowState& s, const json& ev, const std::string& ts) {
  require_stage(s, {Stage::III}, "stage3_select");
  ReviewItem& item = find_item(s.items, ev.at("id"));
  if (item.status != ItemStatus::pending || item.proposals.empty() || item.reroutes > 0) {
    throw StateError("item '" + item.id + "' has no open Stage III proposals", {item.id});
  }
  const std::size_t choice = ev.at("choice");  // 0 denies
  if (choice > item.proposals.size()) {
    throw UsageError("choice " + std::to_string(choice) + " out of range 1.." + std::to_string(item.proposals.size()));
  }
  item.reviewer = ev.value("reviewer", "");
  if (choice == 0) {
    enter(item, ItemStatus::denied, ts);
    return;
  }
  item.mask = item.proposals[choice - 1];
  item.chosen = choice;
  ++s.tallies[choice - 1];
  enter(item, ItemStatus::accepted, ts);
  s.repository.insert(item.id);
}

void check_stage4_ready(const WorkflowState& s) {
  require_stage(s, {Stage::III}, "begin_stage4");
  if (s.batch_open) throw StateError("the current round must be finalized first", s.batch);
  std::vector<std::string> missing;
  for (const auto& [id, item] : s.items) {
    if (!is_terminal(item.status)) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw StateError("repository incomplete: " + std::to_string(missing.size()) + " item(s) missing", missing);
  }
}

void on_stage4_started(WorkflowState& s, const json& ev) {
  check_stage4_ready(s);
  s.champion = ev.at("champion");
  s.stage = Stage::IV;
}

void on_verification_sampled(WorkflowState& s, const json& ev) {
  require_stage(s, {Stage::IV}, "stage4_sample");
  if (!s.verification.empty()) throw StateError("the verification set has already been drawn");
  const std::vector<std::string> ids = ev.at("ids");
  for (const auto& id : ids) {
    if (!s.repository.contains(id)) throw StateError("item '" + id + "' is not in the repository", {id});
  }
  for (const auto& id : ids) s.items.at(id).verification_pending = true;
  s.verification = ids;
}

void on_verified(WorkflowState& s, const json& ev, const std::string& ts) {
  require_stage(s, {Stage::IV}, "stage4_verify");
  ReviewItem& item = find_item(s.items, ev.at("id"));
  if (!item.verification_pending) throw StateError("item '" + item.id + "' is not awaiting verification", {item.id});
  std::optional<BinaryMask> adjusted = optional_mask(ev, "mask");
  if (adjusted) item.mask = std::move(adjusted);
  item.reviewer = ev.value("reviewer", "");
  item.verification_pending = false;
  enter(item, ItemStatus::verified, ts);
}

}  // namespace

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::I: return "I";
    case Stage::II: return "II";
    case Stage::III: return "III";
    default: return "IV";
  }
}

std::string status_name(ItemStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }

ItemStatus parse_status(const std::string& name) {
  for (std::size_t i = 0; i < std::size(kStatusNames); ++i) {
    if (name == kStatusNames[i]) return static_cast<ItemStatus>(i);
  }
  throw ParseError("unknown item status '" + name + "'", 0);
}

std::string decision_name(Decision d) { return kDecisionNames[static_cast<std::size_t>(d)]; }

Decision parse_decision(const std::string& name) {
  for (std::size_t i = 0; i < std::size(kDecisionNames); ++i) {
    if (name == kDecisionNames[i]) return static_cast<Decision>(i);
  }
  throw UsageError("unknown decision '" + name + "' (expected accept, reject, unsure or exclude)");
}

bool is_terminal(ItemStatus s) {
  return s == ItemStatus::accepted || s == ItemStatus::modified || s == ItemStatus::excluded ||
         s == ItemStatus::verified;
}

bool in_repository(ItemStatus s) {
  return s == ItemStatus::accepted || s == ItemStatus::modified || s == ItemStatus::verified;
}

void WorkflowConfig::validate() const {
  if (batch_size == 0) throw ConfigError("workflow batch_size must be positive");
  if (!(verification_fraction > 0.0 && verification_fraction < 1.0)) {
    throw ConfigError("verification_fraction must lie in (0,1)");
  }
}

std::size_t argmax_first(const std::vector<double>& values) {
  if (values.empty()) throw UsageError("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void WorkflowState::apply(const json& ev) {
  const std::uint64_t seq = ev.at("seq");
  if (seq != last_seq + 1) {
    throw StateError("event sequence gap: expected " + std::to_string(last_seq + 1) + ", got " + std::to_string(seq));
  }
  const std::string type = ev.at("type");
  const std::string ts = ev.value("ts", "");
  if (type == "items_added") on_items_added(*this, ev, ts);
  else if (type == "stage1_selected") on_stage1_selected(*this, ev);
  else if (type == "batch_drawn") on_batch_drawn(*this, ev, ts);
  else if (type == "decision") on_decision(*this, ev, ts);
  else if (type == "md_resolved") on_md_resolved(*this, ev, ts);
  else if (type == "round_finalized") on_round_finalized(*this, ev);
  else if (type == "stage3_started") on_stage3_started(*this, ev);
  else if (type == "proposals_set") on_proposals_set(*this, ev, ts);
  else if (type == "stage3_selected") on_stage3_selected(*this, ev, ts);
  else if (type == "stage4_started") on_stage4_started(*this, ev);
  else if (type == "verification_sampled") on_verification_sampled(*this, ev);
  else if (type == "verified") on_verified(*this, ev, ts);
  else throw ParseError("unknown event type '" + type + "'", seq);
  last_seq = seq;
}

// ---- serialization ------------------------------------------------------

json to_json(const ReviewItem& item) {
  json proposals = json::array();
  for (const auto& p : item.proposals) proposals.push_back(mask_to_rle(p));
  json history = json::array();
  for (const auto& [ts, st] : item.history) history.push_back({ts, status_name(st)});
  return {{"id", item.id},
          {"image", item.image},
          {"group", item.group},
          {"status", status_name(item.status)},
          {"round", item.round},
          {"reviewer", item.reviewer},
          {"md_note", item.md_note},
          {"mask", item.mask ? mask_to_rle(*item.mask) : json(nullptr)},
          {"proposals", std::move(proposals)},
          {"chosen", item.chosen ? json(*item.chosen) : json(nullptr)},
          {"reroutes", item.reroutes},
          {"verification_pending", item.verification_pending},
          {"history", std::move(history)}};
}

namespace {

ReviewItem item_from_json(const json& j) {
  ReviewItem item;
  item.id = j.at("id");
  item.image = j.at("image");
  item.group = j.at("group");
  item.status = parse_status(j.at("status"));
  item.round = j.at("round");
  item.reviewer = j.at("reviewer");
  item.md_note = j.at("md_note");
  if (!j.at("mask").is_null()) item.mask = mask_from_rle(j.at("mask"));
  for (const auto& p : j.at("proposals")) item.proposals.push_back(mask_from_rle(p));
  if (!j.at("chosen").is_null()) item.chosen = j.at("chosen").get<std::size_t>();
  item.reroutes = j.at("reroutes");
  item.verification_pending = j.at("verification_pending");
  for (const auto& h : j.at("history")) item.history.emplace_back(h.at(0), parse_status(h.at(1)));
  return item;
}

}  // namespace

json to_json(const WorkflowState& s) {
  json items = json::array();
  for (const auto& [_, item] : s.items) items.push_back(to_json(item));
  return {{"stage", static_cast<int>(s.stage)},
          {"items", std::move(items)},
          {"repository", s.repository},
          {"round", s.round},
          {"batch", s.batch},
          {"batch_open", s.batch_open},
          {"stage2_drawn", s.stage2_drawn},
          {"candidates", s.candidates},
          {"models", s.models},
          {"tallies", s.tallies},
          {"champion", s.champion},
          {"verification", s.verification},
          {"last_seq", s.last_seq}};
}

WorkflowState state_from_json(const json& j) {
  try {
    WorkflowState s;
    const int stage = j.at("stage");
    if (stage < 1 || stage > 4) throw ParseError("stage out of range", 0);
    s.stage = static_cast<Stage>(stage);
    for (const auto& it : j.at("items")) {
      ReviewItem item = item_from_json(it);
      s.items.emplace(item.id, std::move(item));
    }
    s.repository = j.at("repository").get<std::set<std::string>>();
    s.round = j.at("round");
    s.batch = j.at("batch").get<std::vector<std::string>>();
    s.batch_open = j.at("batch_open");
    s.stage2_drawn = j.at("stage2_drawn");
    s.candidates = j.at("candidates").get<std::vector<std::string>>();
    s.models = j.at("models").get<std::vector<std::string>>();
    s.tallies = j.at("tallies").get<std::vector<std::size_t>>();
    s.champion = j.at("champion");
    s.verification = j.at("verification").get<std::vector<std::string>>();
    s.last_seq = j.at("last_seq");
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad workflow snapshot: ") + e.what(), 0);
  }
}

json to_json(const Progress& p) {
  return {{"stage", stage_name(p.stage)}, {"round", p.round},         {"champion", p.champion},
          {"repository", p.repository},   {"status_counts", p.status_counts}, {"tallies", p.tallies},
          {"events", p.events}};
}

// ---- engine -------------------------------------------------------------

Workflow::Workflow(WorkflowConfig config, std::filesystem::path log_path, Clock clock,
                   std::optional<WorkflowState> snapshot)
    : config_(config), clock_(clock ? std::move(clock) : Clock(utc_now)) {
  config_.validate();
  if (snapshot) state_ = std::move(*snapshot);
  if (!log_path.empty()) {
    if (std::filesystem::exists(log_path)) {
      std::vector<json> events = read_events(log_path);
      std::erase_if(events, [&](const json& e) { return e.at("seq").get<std::uint64_t>() <= state_.last_seq; });
      state_ = replay(events, std::move(state_));
    }
    log_.emplace(log_path);
  }
}

json Workflow::commit(json event) {
  event["seq"] = state_.last_seq + 1;
  event["ts"] = clock_();
  state_.apply(event);
  if (log_) log_->append(event);
  return event;
}

void Workflow::add_items(const std::vector<NewItem>& items) {
  json list = json::array();
  for (const auto& it : items) list.push_back({{"id", it.id}, {"image", it.image}, {"group", it.group}});
  std::lock_guard lock(mu_);
  commit({{"type", "items_added"}, {"items", std::move(list)}});
}

std::string Workflow::stage1_select(const std::vector<CandidateScore>& candidates) {
  if (candidates.empty()) throw UsageError("stage1_select needs at least one candidate");
  std::vector<double> scores;
  json list = json::array();
  for (const auto& c : candidates) {
    scores.push_back(c.dsc);
    list.push_back({{"model", c.model}, {"dsc", c.dsc}});
  }
  const std::string champion = candidates[argmax_first(scores)].model;
  std::lock_guard lock(mu_);
  commit({{"type", "stage1_selected"}, {"candidates", std::move(list)}, {"champion", champion}});
  return champion;
}

std::vector<std::string> Workflow::next_batch(std::optional<std::size_t> batch_size, const MaskProvider& provider) {
  const std::size_t want = batch_size.value_or(config_.batch_size);
  if (want == 0) throw ConfigError("batch size must be positive");
  std::lock_guard lock(mu_);
  require_stage(state_, {Stage::II, Stage::III}, "next_batch");
  if (state_.batch_open) throw StateError("the current round must be finalized first", state_.batch);

  std::vector<std::string> pool;
  for (const auto& [id, item] : state_.items) {
    const bool eligible = state_.stage == Stage::II
                              ? item.status == ItemStatus::unannotated
                              : item.status == ItemStatus::denied && item.reroutes == 0;
    if (eligible) pool.push_back(id);
  }
  std::size_t n = std::min(want, pool.size());
  if (state_.stage == Stage::II) n = std::min(n, config_.stage2_budget - std::min(config_.stage2_budget, state_.stage2_drawn));
  if (n == 0) return {};

  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(state_.round), static_cast<std::uint32_t>(state_.stage)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);

  json ev{{"type", "batch_drawn"}, {"ids", pool}};
  if (state_.stage == Stage::II) ev["budget"] = config_.stage2_budget;
  if (provider) {
    json masks = json::object();
    for (const auto& id : pool) masks[id] = mask_to_rle(provider(id));
    ev["masks"] = std::move(masks);
  }
  commit(std::move(ev));
  return pool;
}

ReviewItem Workflow::submit_decision(const std::string& id, Decision decision, const std::optional<BinaryMask>& edited,
                                     const std::string& reviewer) {
  json ev{{"type", "decision"}, {"id", id}, {"decision", decision_name(decision)}, {"reviewer", reviewer}};
  if (edited) ev["mask"] = mask_to_rle(*edited);
  std::lock_guard lock(mu_);
  commit(std::move(ev));
  return state_.items.at(id);
}

ReviewItem Workflow::md_resolve(const std::string& id, const std::string& note, const BinaryMask& adjusted,
                                const std::string& reviewer) {
  json ev{{"type", "md_resolved"}, {"id", id}, {"note", note}, {"reviewer", reviewer}, {"mask", mask_to_rle(adjusted)}};
  std::lock_guard lock(mu_);
  commit(std::move(ev));
  return state_.items.at(id);
}

RetrainJob Workflow::finalize_round() {
  std::lock_guard lock(mu_);
  const std::size_t round = state_.round;
  commit({{"type", "round_finalized"}, {"round", round}});
  return {round, {state_.repository.begin(), state_.repository.end()}, config_.fine_tune};
}

void Workflow::begin_stage3(const std::vector<std::string>& models) {
  std::lock_guard lock(mu_);
  commit({{"type", "stage3_started"}, {"models", models}});
}

std::size_t Workflow::stage3_propose(const std::vector<std::string>& ids, const ProposalProvider& provider) {
  if (!provider) throw UsageError("stage3_propose needs a proposal provider");
  std::lock_guard lock(mu_);
  require_stage(state_, {Stage::III}, "stage3_propose");
  if (state_.models.size() != 6) throw ConfigError("Stage III needs exactly 6 registered models");
  json proposals = json::object();
  std::size_t total = 0;
  for (const auto& id : ids) {
    find_item(state_.items, id);
    json list = json::array();
    for (const auto& m : provider(id)) list.push_back(mask_to_rle(m));
    total += list.size();
    proposals[id] = std::move(list);
  }
  commit({{"type", "proposals_set"}, {"proposals", std::move(proposals)}});
  return total;
}

ReviewItem Workflow::stage3_select(const std::string& id, std::optional<std::size_t> choice,
                                   const std::string& reviewer) {
  if (choice && (*choice < 1 || *choice > 6)) {
    throw UsageError("choice " + std::to_string(*choice) + " out of range 1..6");
  }
  std::lock_guard lock(mu_);
  commit({{"type", "stage3_selected"}, {"id", id}, {"choice", choice.value_or(0)}, {"reviewer", reviewer}});
  return state_.items.at(id);
}

std::string Workflow::stage3_champion() const {
  std::lock_guard lock(mu_);
  std::vector<double> t(state_.tallies.begin(), state_.tallies.end());
  std::size_t total = 0;
  for (auto x : state_.tallies) total += x;
  if (total == 0) throw UsageError("no Stage III selections recorded");
  return state_.models[argmax_first(t)];
}

void Workflow::begin_stage4() {
  {
    std::lock_guard lock(mu_);
    check_stage4_ready(state_);
  }
  const std::string champion = stage3_champion();
  std::lock_guard lock(mu_);
  commit({{"type", "stage4_started"}, {"champion", champion}});
}

std::vector<std::string> Workflow::stage4_sample(std::optional<double> fraction, std::optional<std::uint64_t> seed) {
  const double f = fraction.value_or(config_.verification_fraction);
  if (!(f > 0.0 && f < 1.0)) throw ConfigError("verification fraction must lie in (0,1)");
  std::lock_guard lock(mu_);
  require_stage(state_, {Stage::IV}, "stage4_sample");

  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& id : state_.repository) groups[state_.items.at(id).group].push_back(id);
  const std::size_t total = state_.repository.size();
  const auto target = static_cast<std::size_t>(std::llround(f * static_cast<double>(total)));

  // Largest-remainder apportionment keeps the total at round(f * N).
  std::vector<std::pair<std::string, std::size_t>> quota;
  std::vector<std::pair<double, std::string>> remainders;
  std::size_t assigned = 0;
  for (const auto& [g, ids] : groups) {
    const double exact = f * static_cast<double>(ids.size());
    const auto base = static_cast<std::size_t>(std::floor(exact));
    quota.emplace_back(g, base);
    remainders.emplace_back(exact - static_cast<double>(base), g);
    assigned += base;
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i, ++assigned) {
    for (auto& [g, q] : quota) {
      if (g == remainders[i].second) ++q;
    }
  }

  std::mt19937_64 rng(seed.value_or(config_.seed));
  std::vector<std::string> sample;
  for (const auto& [g, q] : quota) {
    std::vector<std::string> ids = groups[g];
    std::shuffle(ids.begin(), ids.end(), rng);
    sample.insert(sample.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(q));
  }
  std::sort(sample.begin(), sample.end());
  commit({{"type", "verification_sampled"}, {"fraction", f}, {"ids", sample}});
  return sample;
}

ReviewItem Workflow::stage4_verify(const std::string& id, const std::string& reviewer,
                                   const std::optional<BinaryMask>& adjusted) {
  json ev{{"type", "verified"}, {"id", id}, {"reviewer", reviewer}};
  if (adjusted) ev["mask"] = mask_to_rle(*adjusted);
  std::lock_guard lock(mu_);
  commit(std::move(ev));
  return state_.items.at(id);
}

WorkflowState Workflow::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

ReviewItem Workflow::item(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = state_.items.find(id);
  if (it == state_.items.end()) throw NotFoundError("unknown item '" + id + "'");
  return it->second;
}

std::vector<ReviewItem> Workflow::queue(std::size_t limit) const {
  std::lock_guard lock(mu_);
  std::vector<ReviewItem> out;
  for (const auto& [_, item] : state_.items) {
    if (out.size() >= limit) break;
    if (item.status == ItemStatus::pending || item.status == ItemStatus::rejected_pending_edit ||
        item.status == ItemStatus::unsure_pending_md) {
      out.push_back(item);
    }
  }
  return out;
}

Progress Workflow::progress() const {
  std::lock_guard lock(mu_);
  Progress p;
  p.stage = state_.stage;
  p.round = state_.round;
  p.champion = state_.champion;
  p.repository = state_.repository.size();
  for (const char* name : kStatusNames) p.status_counts[name] = 0;
  for (const auto& [_, item] : state_.items) ++p.status_counts[status_name(item.status)];
  p.tallies = state_.tallies;
  p.events = state_.last_seq;
  return p;
}

void Workflow::save_snapshot(const std::filesystem::path& path) const {
  const std::string text = to_json(state()).dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NotFoundError("cannot write snapshot " + path.string());
  out << text << '\n';
}

}  // namespace cxrseg
