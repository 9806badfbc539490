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

#include "cxrseg/service.hpp"

namespace cxrseg {

std::string job_kind_name(JobKind k) {
  switch (k) {
    case JobKind::train: return "train";
    case JobKind::infer: return "infer";
    default: return "evaluate";
  }
}

std::string job_state_name(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    default: return "failed";
  }
}

nlohmann::json to_json(const JobStatus& s) {
  return {{"id", s.id},
          {"kind", job_kind_name(s.kind)},
          {"state", job_state_name(s.state)},
          {"progress", s.progress},
          {"result", s.result},
          {"error", s.error}};
}

JobQueue::JobQueue() : worker_([this] { run(); }) {}

JobQueue::~JobQueue() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

std::string JobQueue::submit(JobKind kind, Work work) {
  std::lock_guard lock(mu_);
  const std::string id = "job-" + std::to_string(next_id_++);
  JobStatus s;
  s.id = id;
  s.kind = kind;
  jobs_.emplace(id, s);
  pending_.emplace_back(id, std::move(work));
  cv_.notify_all();
  return id;
}

JobStatus JobQueue::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw NotFoundError("unknown job '" + id + "'");
  return it->second;
}

JobStatus JobQueue::wait(const std::string& id) const {
  std::unique_lock lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw NotFoundError("unknown job '" + id + "'");
  cv_.wait(lock, [&] { return it->second.state == JobState::done || it->second.state == JobState::failed; });
  return it->second;
}

void JobQueue::run() {
  for (;;) {
    std::pair<std::string, Work> job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || !pending_.empty(); });
      if (stop_) {
        for (auto& [id, _] : pending_) {
          jobs_[id].state = JobState::failed;
          jobs_[id].error = "service shut down";
        }
        cv_.notify_all();
        return;
      }
      job = std::move(pending_.front());
      pending_.pop_front();
      jobs_[job.first].state = JobState::running;
    }
    const std::string& id = job.first;
    auto progress = [this, &id](double f) {
      std::lock_guard lock(mu_);
      jobs_[id].progress = f;
    };
    nlohmann::json result;
    std::string error;
    bool ok = true;
    try {
      result = job.second(progress);
    } catch (const std::exception& e) {
      ok = false;
      error = e.what();
    }
    {
      std::lock_guard lock(mu_);
      JobStatus& s = jobs_[id];
      s.state = ok ? JobState::done : JobState::failed;
      if (ok) s.progress = 1.0;
      s.result = std::move(result);
      s.error = std::move(error);
    }
    cv_.notify_all();
  }
}

}  // namespace cxrseg
