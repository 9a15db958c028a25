#pragma once

// Background jobs with polling. A fixed pool of workers drains a FIFO
// queue; each job owns a stop_source so it can be cancelled between
// evaluations.

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "losslens/errors.hpp"

namespace losslens {

enum class JobStatus { queued, running, done, failed, cancelled };

inline const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
    case JobStatus::cancelled: return "cancelled";
  }
  return "?";
}

class JobManager {
 public:
  using Work = std::function<nlohmann::json(std::stop_token)>;
  using ProgressFn = std::function<nlohmann::json()>;

  explicit JobManager(std::size_t workers = 2) {
    if (workers == 0) workers = 1;
    for (std::size_t i = 0; i < workers; ++i) pool_.emplace_back([this](std::stop_token st) { worker(st); });
  }

  ~JobManager() {
    {
      std::lock_guard lock(mu_);
      for (auto& [id, job] : jobs_) job->stop.request_stop();
    }
    for (auto& t : pool_) t.request_stop();
    cv_.notify_all();
  }

  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  std::string submit(std::string kind, Work work, ProgressFn progress = {}) {
    auto job = std::make_shared<Job>();
    job->kind = std::move(kind);
    job->work = std::move(work);
    job->progress = std::move(progress);
    std::lock_guard lock(mu_);
    job->id = "job-" + std::to_string(++counter_);
    jobs_[job->id] = job;
    queue_.push_back(job);
    cv_.notify_one();
    return job->id;
  }

  std::optional<nlohmann::json> describe(const std::string& id) const {
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(mu_);
      auto it = jobs_.find(id);
      if (it == jobs_.end()) return std::nullopt;
      job = it->second;
    }
    std::lock_guard lock(job->mu);
    nlohmann::json j = {{"id", job->id}, {"kind", job->kind}, {"status", to_string(job->status)}};
    if (job->progress && (job->status == JobStatus::running || job->status == JobStatus::queued))
      j["progress"] = job->progress();
    if (job->status == JobStatus::done) j["result"] = job->result;
    if (job->status == JobStatus::failed) j["error"] = job->error;
    return j;
  }

  bool cancel(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return false;
    it->second->stop.request_stop();
    return true;
  }

  // Blocks until the job leaves the queue/running states.
  std::optional<nlohmann::json> wait(const std::string& id) const {
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(mu_);
      auto it = jobs_.find(id);
      if (it == jobs_.end()) return std::nullopt;
      job = it->second;
    }
    {
      std::unique_lock lock(job->mu);
      job->finished.wait(lock, [&] { return job->status != JobStatus::queued && job->status != JobStatus::running; });
    }
    return describe(id);
  }

 private:
  struct Job {
    std::string id;
    std::string kind;
    Work work;
    ProgressFn progress;
    std::stop_source stop;
    mutable std::mutex mu;
    std::condition_variable finished;
    JobStatus status = JobStatus::queued;
    nlohmann::json result;
    nlohmann::json error;
  };

  void worker(std::stop_token st) {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mu_);
        if (!cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
        job = queue_.front();
        queue_.pop_front();
      }
      run(*job);
    }
  }

  static void run(Job& job) {
    {
      std::lock_guard lock(job.mu);
      if (job.stop.stop_requested()) {
        job.status = JobStatus::cancelled;
        job.finished.notify_all();
        return;
      }
      job.status = JobStatus::running;
    }
    JobStatus status = JobStatus::done;
    nlohmann::json result, error;
    try {
      result = job.work(job.stop.get_token());
      if (job.stop.stop_requested()) status = JobStatus::cancelled;
    } catch (const Cancelled&) {
      status = JobStatus::cancelled;
    } catch (const Error& e) {
      status = JobStatus::failed;
      error = {{"kind", e.kind()}, {"message", e.what()}};
    } catch (const std::exception& e) {
      status = JobStatus::failed;
      error = {{"kind", "internal"}, {"message", e.what()}};
    }
    std::lock_guard lock(job.mu);
    job.status = status;
    job.result = std::move(result);
    job.error = std::move(error);
    job.finished.notify_all();
  }

  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::size_t counter_ = 0;
  std::vector<std::jthread> pool_;
};

}  // namespace losslens
