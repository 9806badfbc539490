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

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "cxrseg/maskops.hpp"
#include "cxrseg/models.hpp"
#include "cxrseg/trainer.hpp"
#include "cxrseg/workflow.hpp"

namespace cxrseg {

// ---- configuration ------------------------------------------------------

/// JSON file with optional sections "train", "model", "workflow",
/// "postprocess" and "service". Unknown keys are rejected.
struct ServiceConfig {
  TrainConfig train;
  ModelConfig model;
  WorkflowConfig workflow;
  PostprocessOptions post;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t image_size = 256;
};

ServiceConfig parse_config(const nlohmann::json& j);
ServiceConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ServiceConfig& c);

// ---- background jobs ----------------------------------------------------

enum class JobKind { train, infer, evaluate };
enum class JobState { queued, running, done, failed };

std::string job_kind_name(JobKind k);
std::string job_state_name(JobState s);

struct JobStatus {
  std::string id;
  JobKind kind = JobKind::train;
  JobState state = JobState::queued;
  double progress = 0.0;
  nlohmann::json result;
  std::string error;
};

nlohmann::json to_json(const JobStatus& s);

/// Runs jobs one at a time on a single worker thread, in submission order.
class JobQueue {
 public:
  using ProgressFn = std::function<void(double)>;
  using Work = std::function<nlohmann::json(const ProgressFn&)>;

  JobQueue();
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  std::string submit(JobKind kind, Work work);
  JobStatus get(const std::string& id) const;
  /// Blocks until the job is done or failed.
  JobStatus wait(const std::string& id) const;

 private:
  void run();

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, JobStatus> jobs_;
  std::deque<std::pair<std::string, Work>> pending_;
  std::uint64_t next_id_ = 1;
  bool stop_ = false;
  std::thread worker_;
};

// ---- HTTP API -----------------------------------------------------------

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string reviewer;  // X-Reviewer header
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Builds the work for POST /api/jobs/train from its request body.
using TrainJobFactory = std::function<JobQueue::Work(const nlohmann::json& body)>;

/// Default factory: trains on a manifest ("manifest", "task", "out",
/// optional "fold") with the given configuration.
TrainJobFactory manifest_train_factory(const ServiceConfig& config);

class Api {
 public:
  Api(Workflow& workflow, JobQueue& jobs, TrainJobFactory train_factory = {});
  ApiResponse handle(const ApiRequest& req);

 private:
  Workflow& wf_;
  JobQueue& jobs_;
  TrainJobFactory train_factory_;
};

/// Serves `api` until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(Api& api);
  ~HttpServer();
  /// Binds and returns the port (useful with port 0).
  int bind(const std::string& host, int port);
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---- command line -------------------------------------------------------

/// Runs one subcommand. Returns the process exit code; usage errors give 2.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cxrseg
