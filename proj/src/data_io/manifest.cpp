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
#include <map>
#include <sstream>

#include <json.hpp>

#include "cxrseg/data_io.hpp"

namespace cxrseg {

std::string class_name(SampleClass c) {
  switch (c) {
    case SampleClass::covid:
      return "covid";
    case SampleClass::non_covid:
      return "non_covid";
    case SampleClass::normal:
      return "normal";
  }
  return "unknown";
}

std::optional<SampleClass> parse_class(const std::string& name) {
  if (name == "covid") return SampleClass::covid;
  if (name == "non_covid") return SampleClass::non_covid;
  if (name == "normal") return SampleClass::normal;
  return std::nullopt;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "unknown";
}

std::optional<Split> parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  return std::nullopt;
}

namespace {

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::vector<DatasetRecord> parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                                          const ManifestOptions& opts) {
  std::vector<DatasetRecord> out;
  std::vector<std::string> problems;
  std::size_t first_bad_line = 0;
  std::map<std::string, std::size_t> seen;  // id -> line

  auto fail = [&](std::size_t line, const std::string& msg) {
    if (first_bad_line == 0) first_bad_line = line;
    problems.push_back("line " + std::to_string(line) + ": " + msg);
  };

  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(raw);
      if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
      DatasetRecord r;
      auto id = opt_string(j, "id");
      auto image = opt_string(j, "image");
      auto cls = opt_string(j, "class");
      if (!id || id->empty()) throw std::invalid_argument("missing id");
      if (!image) throw std::invalid_argument("missing image");
      if (!cls) throw std::invalid_argument("missing class");
      r.id = *id;
      r.image = resolve(base_dir, *image);
      auto c = parse_class(*cls);
      if (!c) throw std::invalid_argument("unknown class '" + *cls + "'");
      r.sample_class = *c;
      if (auto m = opt_string(j, "lung_mask")) r.lung_mask = resolve(base_dir, *m);
      if (auto m = opt_string(j, "infection_mask")) r.infection_mask = resolve(base_dir, *m);
      if (auto s = opt_string(j, "split")) {
        auto sp = parse_split(*s);
        if (!sp) throw std::invalid_argument("unknown split '" + *s + "'");
        r.split = *sp;
      }
      if (auto it = j.find("fold"); it != j.end() && !it->is_null()) {
        if (!it->is_number_unsigned()) throw std::invalid_argument("fold must be a non-negative integer");
        r.fold = it->get<std::size_t>();
      }
      if (auto [pos, fresh] = seen.emplace(r.id, line); !fresh) {
        throw std::invalid_argument("duplicate id '" + r.id + "' (first seen on line " + std::to_string(pos->second) +
                                    ", again on line " + std::to_string(line) + ")");
      }
      if (opts.check_files) {
        for (const auto* p : {&r.image, r.lung_mask ? &*r.lung_mask : nullptr,
                              r.infection_mask ? &*r.infection_mask : nullptr}) {
          if (p && !std::filesystem::exists(*p)) throw std::invalid_argument("missing file " + p->string());
        }
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(line, std::string("malformed JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
      fail(line, e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "manifest has " + std::to_string(problems.size()) + " invalid line(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ParseError(msg, first_bad_line);
  }
  return out;
}

std::vector<DatasetRecord> load_manifest(const std::filesystem::path& path, const ManifestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path(), opts);
}

void save_manifest(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    return base.empty() ? p.generic_string() : p.lexically_relative(base).generic_string();
  };
  std::ostringstream out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["image"] = rel(r.image);
    j["lung_mask"] = r.lung_mask ? nlohmann::ordered_json(rel(*r.lung_mask)) : nlohmann::ordered_json(nullptr);
    j["infection_mask"] =
        r.infection_mask ? nlohmann::ordered_json(rel(*r.infection_mask)) : nlohmann::ordered_json(nullptr);
    j["class"] = class_name(r.sample_class);
    j["split"] = r.split ? nlohmann::ordered_json(split_name(*r.split)) : nlohmann::ordered_json(nullptr);
    j["fold"] = r.fold ? nlohmann::ordered_json(*r.fold) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
  const std::string s = out.str();
  write_file(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

Sample load_sample(const DatasetRecord& record, std::size_t size) {
  Sample s;
  s.id = record.id;
  s.sample_class = record.sample_class;
  s.image = read_image(record.image);
  const std::size_t h = s.image.height, w = s.image.width;
  s.lung = record.lung_mask ? read_mask(*record.lung_mask) : BinaryMask(h, w);
  s.infection = record.infection_mask ? read_mask(*record.infection_mask) : BinaryMask(h, w);
  if (!s.lung.same_dims(s.infection) || s.lung.height() != h || s.lung.width() != w) {
    throw DimensionError("sample " + record.id + ": mask dimensions differ from the image");
  }
  if (size != 0) {
    s.image = resize(s.image, size);
    s.lung = resize_mask(s.lung, size);
    s.infection = resize_mask(s.infection, size);
  }
  return s;
}

}  // namespace cxrseg
