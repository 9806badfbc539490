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

#include <fstream>
#include <sstream>

#include "cxrseg/workflow.hpp"

namespace cxrseg {

using nlohmann::json;

json mask_to_rle(const BinaryMask& mask) {
  // Alternating run lengths, starting with background.
  json runs = json::array();
  std::uint8_t current = 0;
  std::size_t run = 0;
  for (std::uint8_t v : mask.values()) {
    if (v != current) {
      runs.push_back(run);
      current = v;
      run = 0;
    }
    ++run;
  }
  runs.push_back(run);
  return {{"h", mask.height()}, {"w", mask.width()}, {"runs", std::move(runs)}};
}

BinaryMask mask_from_rle(const json& j) {
  try {
    const std::size_t h = j.at("h"), w = j.at("w");
    std::vector<std::uint8_t> values;
    values.reserve(h * w);
    std::uint8_t v = 0;
    for (const auto& r : j.at("runs")) {
      const std::size_t n = r.get<std::size_t>();
      if (values.size() + n > h * w) throw ParseError("mask runs exceed " + std::to_string(h * w) + " pixels", 0);
      values.insert(values.end(), n, v);
      v ^= 1;
    }
    if (values.size() != h * w) throw ParseError("mask runs cover " + std::to_string(values.size()) + " of " +
                                                     std::to_string(h * w) + " pixels", 0);
    return BinaryMask(h, w, std::move(values));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad mask record: ") + e.what(), 0);
  }
}

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw NotFoundError("cannot open event log " + path_.string());
}

void EventLog::append(const json& event) {
  out_ << event.dump() << '\n';
  out_.flush();
  if (!out_) throw Error("failed to append to event log " + path_.string());
}

std::vector<json> read_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open event log " + path.string());
  std::vector<json> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json ev = json::parse(line, nullptr, false);
    if (ev.is_discarded() || !ev.is_object() || !ev.contains("seq") || !ev.contains("type")) {
      throw ParseError("malformed event in " + path.string(), lineno);
    }
    events.push_back(std::move(ev));
  }
  return events;
}

WorkflowState replay(const std::vector<json>& events, WorkflowState start) {
  for (const auto& ev : events) start.apply(ev);
  return start;
}

}  // namespace cxrseg
