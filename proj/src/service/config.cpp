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
#include <set>
#include <sstream>

#include "cxrseg/service.hpp"

namespace cxrseg {

using nlohmann::json;

namespace {

void check_keys(const json& section, const std::string& name, const std::set<std::string>& allowed) {
  if (!section.is_object()) throw ConfigError("config section '" + name + "' must be an object");
  for (const auto& [k, _] : section.items()) {
    if (!allowed.contains(k)) throw ConfigError("unknown key '" + k + "' in config section '" + name + "'");
  }
}

template <typename T>
void read(const json& section, const char* key, T& into) {
  if (section.contains(key)) into = section.at(key).get<T>();
}

}  // namespace

ServiceConfig parse_config(const json& j) {
  ServiceConfig c;
  try {
    check_keys(j, "<root>", {"train", "model", "workflow", "postprocess", "service"});
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t, "train",
                 {"alpha", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "plateau_patience",
                  "plateau_factor", "early_stop_patience", "improvement_threshold", "seed", "image_size"});
      read(t, "alpha", c.train.alpha);
      read(t, "beta1", c.train.beta1);
      read(t, "beta2", c.train.beta2);
      read(t, "epsilon", c.train.epsilon);
      read(t, "batch_size", c.train.batch_size);
      read(t, "max_epochs", c.train.max_epochs);
      read(t, "plateau_patience", c.train.plateau_patience);
      read(t, "plateau_factor", c.train.plateau_factor);
      read(t, "early_stop_patience", c.train.early_stop_patience);
      read(t, "improvement_threshold", c.train.improvement_threshold);
      read(t, "seed", c.train.seed);
      read(t, "image_size", c.image_size);
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m, "model", {"arch", "depth", "base_channels", "in_channels"});
      if (m.contains("arch")) c.model.arch = parse_arch(m["arch"].get<std::string>());
      read(m, "depth", c.model.depth);
      read(m, "base_channels", c.model.base_channels);
      read(m, "in_channels", c.model.in_channels);
    }
    if (j.contains("workflow")) {
      const json& w = j["workflow"];
      check_keys(w, "workflow", {"batch_size", "stage2_budget", "verification_fraction", "fine_tune", "seed"});
      read(w, "batch_size", c.workflow.batch_size);
      read(w, "stage2_budget", c.workflow.stage2_budget);
      read(w, "verification_fraction", c.workflow.verification_fraction);
      read(w, "fine_tune", c.workflow.fine_tune);
      read(w, "seed", c.workflow.seed);
    }
    if (j.contains("postprocess")) {
      const json& p = j["postprocess"];
      check_keys(p, "postprocess", {"threshold", "min_region_fraction", "clean_infection"});
      read(p, "threshold", c.post.threshold);
      read(p, "min_region_fraction", c.post.min_region_fraction);
      read(p, "clean_infection", c.post.clean_infection);
    }
    if (j.contains("service")) {
      const json& s = j["service"];
      check_keys(s, "service", {"host", "port"});
      read(s, "host", c.host);
      read(s, "port", c.port);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.train.validate();
  c.model.validate();
  c.workflow.validate();
  if (c.image_size < 8) throw ConfigError("image_size must be at least 8");
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ParseError("config " + path.string() + " is not valid JSON", 0);
  return parse_config(j);
}

json to_json(const ServiceConfig& c) {
  return {{"train",
           {{"alpha", c.train.alpha},
            {"beta1", c.train.beta1},
            {"beta2", c.train.beta2},
            {"epsilon", c.train.epsilon},
            {"batch_size", c.train.batch_size},
            {"max_epochs", c.train.max_epochs},
            {"plateau_patience", c.train.plateau_patience},
            {"plateau_factor", c.train.plateau_factor},
            {"early_stop_patience", c.train.early_stop_patience},
            {"improvement_threshold", c.train.improvement_threshold},
            {"seed", c.train.seed},
            {"image_size", c.image_size}}},
          {"model",
           {{"arch", arch_name(c.model.arch)},
            {"depth", c.model.depth},
            {"base_channels", c.model.base_channels},
            {"in_channels", c.model.in_channels}}},
          {"workflow",
           {{"batch_size", c.workflow.batch_size},
            {"stage2_budget", c.workflow.stage2_budget},
            {"verification_fraction", c.workflow.verification_fraction},
            {"fine_tune", c.workflow.fine_tune},
            {"seed", c.workflow.seed}}},
          {"postprocess",
           {{"threshold", c.post.threshold},
            {"min_region_fraction", c.post.min_region_fraction},
            {"clean_infection", c.post.clean_infection}}},
          {"service", {{"host", c.host}, {"port", c.port}}}};
}

}  // namespace cxrseg
