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

#include <httplib.h>

#include <sstream>

#include "cxrseg/data_io.hpp"
#include "cxrseg/service.hpp"

namespace cxrseg {

using nlohmann::json;

namespace {

ApiResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

ApiResponse error_response(int status, const std::string& message, const std::vector<std::string>& ids = {}) {
  json body{{"error", message}};
  if (!ids.empty()) body["ids"] = ids;
  return json_response(status, body);
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("request body is not a JSON object", 0);
  return j;
}

/// Masks arrive either run-length encoded ({h, w, runs}) or as a flat list of
/// 0/1 values ({h, w, data}).
BinaryMask mask_from_body(const json& j) {
  if (!j.is_object()) throw ParseError("mask must be an object", 0);
  if (j.contains("runs")) return mask_from_rle(j);
  try {
    const std::size_t h = j.at("h"), w = j.at("w");
    std::vector<std::uint8_t> data = j.at("data").get<std::vector<std::uint8_t>>();
    if (data.size() != h * w) throw ParseError("mask data has " + std::to_string(data.size()) + " values", 0);
    return BinaryMask(h, w, std::move(data));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad mask: ") + e.what(), 0);
  }
}

std::string reviewer_of(const json& body, const ApiRequest& req) {
  if (body.contains("reviewer")) return body["reviewer"].get<std::string>();
  return req.reviewer;
}

json item_view(const ReviewItem& item) {
  json proposals = json::array();
  for (std::size_t k = 1; k <= item.proposals.size(); ++k) {
    proposals.push_back("/api/masks/" + item.id + "?proposal=" + std::to_string(k));
  }
  return {{"id", item.id},
          {"image", item.image},
          {"group", item.group},
          {"status", status_name(item.status)},
          {"round", item.round},
          {"reviewer", item.reviewer},
          {"md_note", item.md_note},
          {"mask", item.mask ? json("/api/masks/" + item.id) : json(nullptr)},
          {"proposals", std::move(proposals)},
          {"chosen", item.chosen ? json(*item.chosen) : json(nullptr)},
          {"verification_pending", item.verification_pending}};
}

/// Terminal status an identical decision would have produced.
bool same_outcome(const ReviewItem& item, Decision d, bool has_mask) {
  switch (d) {
    case Decision::accept: return item.status == ItemStatus::accepted;
    case Decision::exclude: return item.status == ItemStatus::excluded;
    case Decision::reject: return has_mask && item.status == ItemStatus::modified;
    default: return false;
  }
}

std::size_t to_size(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError(std::string("bad ") + what + " '" + s + "'");
  }
}

}  // namespace

Api::Api(Workflow& workflow, JobQueue& jobs, TrainJobFactory train_factory)
    : wf_(workflow), jobs_(jobs), train_factory_(std::move(train_factory)) {}

ApiResponse Api::handle(const ApiRequest& req) {
  const auto p = split_path(req.path);
  const bool get = req.method == "GET", post = req.method == "POST";
  try {
    if (p.size() < 2 || p[0] != "api") return error_response(404, "no route for " + req.path);
    const std::string& r = p[1];

    if (get && r == "queue" && p.size() == 2) {
      std::size_t limit = 50;
      if (auto it = req.query.find("limit"); it != req.query.end()) limit = to_size(it->second, "limit");
      json items = json::array();
      for (const auto& item : wf_.queue(limit)) items.push_back(item_view(item));
      return json_response(200, {{"items", std::move(items)}});
    }
    if (get && r == "items" && p.size() == 3) return json_response(200, item_view(wf_.item(p[2])));
    if (get && r == "progress" && p.size() == 2) return json_response(200, to_json(wf_.progress()));

    if (get && r == "masks" && p.size() == 3) {
      const ReviewItem item = wf_.item(p[2]);
      const BinaryMask* mask = nullptr;
      if (auto it = req.query.find("proposal"); it != req.query.end()) {
        const std::size_t k = to_size(it->second, "proposal index");
        if (k < 1 || k > item.proposals.size()) throw NotFoundError("item '" + item.id + "' has no proposal " + it->second);
        mask = &item.proposals[k - 1];
      } else if (item.mask) {
        mask = &*item.mask;
      }
      if (!mask) throw NotFoundError("item '" + item.id + "' has no mask");
      const GrayImage img = mask_to_image(*mask);
      const auto fmt = req.query.contains("format") ? req.query.at("format") : std::string("pgm");
      if (fmt == "png") {
        const auto bytes = encode_png(img);
        return {200, "image/png", std::string(bytes.begin(), bytes.end())};
      }
      if (fmt != "pgm") throw UsageError("unknown mask format '" + fmt + "'");
      const auto bytes = encode_pgm(img);
      return {200, "image/x-portable-graymap", std::string(bytes.begin(), bytes.end())};
    }

    if (post && r == "items" && p.size() == 4 && p[3] == "decision") {
      const json body = parse_body(req.body);
      if (!body.contains("decision") || !body["decision"].is_string()) throw ParseError("missing 'decision'", 0);
      const Decision d = parse_decision(body["decision"]);
      std::optional<BinaryMask> mask;
      if (body.contains("mask") && !body["mask"].is_null()) mask = mask_from_body(body["mask"]);
      const ReviewItem before = wf_.item(p[2]);
      if (is_terminal(before.status)) {
        json out{{"error", "item '" + before.id + "' is already " + status_name(before.status)},
                 {"item", item_view(before)}};
        if (same_outcome(before, d, mask.has_value())) out["conflict"] = "duplicate";
        return json_response(409, out);
      }
      return json_response(200, item_view(wf_.submit_decision(p[2], d, mask, reviewer_of(body, req))));
    }
    if (post && r == "items" && p.size() == 4 && p[3] == "md-resolve") {
      const json body = parse_body(req.body);
      if (!body.contains("mask")) throw ParseError("missing 'mask'", 0);
      const BinaryMask mask = mask_from_body(body["mask"]);
      return json_response(200, item_view(wf_.md_resolve(p[2], body.value("note", ""), mask, reviewer_of(body, req))));
    }
    if (post && r == "rounds" && p.size() == 3 && p[2] == "finalize") {
      const RetrainJob job = wf_.finalize_round();
      return json_response(200, {{"round", job.round}, {"dataset_size", job.dataset.size()}, {"fine_tune", job.fine_tune}});
    }

    if (r == "stage3" && p.size() == 4) {
      if (get && p[3] == "proposals") {
        const ReviewItem item = wf_.item(p[2]);
        json v = item_view(item);
        v["models"] = wf_.state().models;
        return json_response(200, v);
      }
      if (post && p[3] == "select") {
        const json body = parse_body(req.body);
        std::optional<std::size_t> choice;
        if (body.value("deny", false)) {
          if (body.contains("choice")) throw UsageError("give either 'choice' or 'deny', not both");
        } else if (body.contains("choice") && body["choice"].is_number_integer()) {
          const auto c = body["choice"].get<long long>();
          if (c < 1 || c > 6) throw UsageError("choice must be in 1..6");
          choice = static_cast<std::size_t>(c);
        } else {
          throw ParseError("expected an integer 'choice' or 'deny': true", 0);
        }
        return json_response(200, item_view(wf_.stage3_select(p[2], choice, reviewer_of(body, req))));
      }
    }

    if (r == "jobs") {
      if (post && p.size() == 3 && p[2] == "train") {
        if (!train_factory_) throw StateError("training jobs are not configured on this service");
        JobQueue::Work work = train_factory_(parse_body(req.body));
        const std::string id = jobs_.submit(JobKind::train, std::move(work));
        return json_response(202, to_json(jobs_.get(id)));
      }
      if (get && p.size() == 3) return json_response(200, to_json(jobs_.get(p[2])));
    }
    return error_response(404, "no route for " + req.method + " " + req.path);
  } catch (const NotFoundError& e) {
    return error_response(404, e.what());
  } catch (const StateError& e) {
    return error_response(409, e.what(), e.ids());
  } catch (const ParseError& e) {
    return error_response(422, e.what());
  } catch (const UsageError& e) {
    return error_response(422, e.what());
  } catch (const ConfigError& e) {
    return error_response(422, e.what());
  } catch (const DimensionError& e) {
    return error_response(422, e.what());
  } catch (const json::exception& e) {
    return error_response(422, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

TrainJobFactory manifest_train_factory(const ServiceConfig& config) {
  return [config](const json& body) -> JobQueue::Work {
    if (!body.contains("manifest") || !body["manifest"].is_string()) throw ParseError("missing 'manifest'", 0);
    if (!body.contains("out") || !body["out"].is_string()) throw ParseError("missing 'out'", 0);
    const std::filesystem::path manifest = body["manifest"].get<std::string>();
    const std::filesystem::path out = body["out"].get<std::string>();
    const MaskTarget target = parse_target(body.value("task", "lung"));
    const std::size_t fold = body.value("fold", std::size_t{0});
    return [config, manifest, out, target, fold](const JobQueue::ProgressFn& progress) {
      const auto records = load_manifest(manifest);
      const FoldPlan plan = make_fold_plan(records, 0.2, 5, config.train.seed);
      std::map<std::string, const DatasetRecord*> by_id;
      for (const auto& r : records) by_id[r.id] = &r;
      auto pick = [&](const std::vector<std::string>& ids) {
        std::vector<DatasetRecord> out_records;
        for (const auto& id : ids) out_records.push_back(*by_id.at(id));
        return out_records;
      };
      const SegDataset train_set = load_dataset(pick(plan.train_ids(fold)), target, config.image_size);
      const SegDataset val_set = load_dataset(pick(plan.val_ids(fold)), target, config.image_size);
      SegModel model = build_model(config.model, config.train.seed);
      const std::size_t max_epochs = config.train.max_epochs;
      TrainResult res = train(model, train_set, val_set, config.train, [&](const EpochRecord& rec) {
        progress(static_cast<double>(rec.epoch) / static_cast<double>(max_epochs));
      });
      save_weights(out, model);
      const EpochRecord& best = res.history.at(res.best_epoch ? res.best_epoch - 1 : 0);
      return json{{"weights", out.string()},
                  {"best_epoch", res.best_epoch},
                  {"stopped_epoch", res.stopped_epoch},
                  {"val_loss", best.val_loss},
                  {"val_dsc", best.val_dsc}};
    };
  };
}

struct HttpServer::Impl {
  Api& api;
  httplib::Server server;
  explicit Impl(Api& a) : api(a) {}
};

HttpServer::HttpServer(Api& api) : impl_(std::make_unique<Impl>(api)) {
  auto handler = [this](const httplib::Request& hreq, httplib::Response& hres) {
    ApiRequest req;
    req.method = hreq.method;
    req.path = hreq.path;
    for (const auto& [k, v] : hreq.params) req.query[k] = v;
    req.body = hreq.body;
    req.reviewer = hreq.get_header_value("X-Reviewer");
    const ApiResponse res = impl_->api.handle(req);
    hres.status = res.status;
    hres.set_content(res.body, res.content_type);
  };
  impl_->server.Get(R"(/api/.*)", handler);
  impl_->server.Post(R"(/api/.*)", handler);
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace cxrseg
