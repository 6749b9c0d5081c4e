#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "tokenmark/error.hpp"

namespace tokenmark {

inline unsigned default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

inline unsigned plan_workers(std::size_t count, unsigned jobs) {
  if (jobs < 1) raise(ErrorKind::config, "jobs must be at least 1");
  if (count < 2) return 1;
  return static_cast<unsigned>(std::min<std::size_t>(jobs, count));
}

// Runs body(worker, i) for i in [0, count), where worker identifies the
// executing lane in [0, plan_workers(count, jobs)). Work is handed out
// through a shared atomic counter, so per-item cost may vary freely. The
// first exception thrown by any worker is rethrown on the caller's thread
// after all workers have drained. Worker 0 is the caller's thread when only
// one lane is planned.
template <typename Body>
void parallel_for_workers(std::size_t count, unsigned jobs, Body&& body) {
  const unsigned workers = plan_workers(count, jobs);
  if (count == 0) return;
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(0u, i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<bool> failed{false};

  auto run = [&](unsigned worker) {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        body(worker, i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

template <typename Body>
void parallel_for(std::size_t count, unsigned jobs, Body&& body) {
  parallel_for_workers(count, jobs,
                       [&](unsigned, std::size_t i) { body(i); });
}

}  // namespace tokenmark
