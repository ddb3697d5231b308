// Copyright 2026 The cunet Authors.
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

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cunet {

// Small persistent worker pool for row-parallel kernels. Work is always
// split into one contiguous range per thread, so results are bit-identical
// for any thread count: each output element is written by exactly one
// thread and inner accumulation order never changes.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  // Number of threads participating in parallel_for (including the caller).
  void set_threads(std::size_t n) {
    std::lock_guard<std::mutex> lk(resize_mutex_);
    if (n < 1) n = 1;
    stop_workers();
    threads_ = n;
    start_workers(n - 1);
  }

  std::size_t threads() const { return threads_; }

  // Runs fn(begin, end) over a partition of [0, n). The caller executes the
  // first chunk; workers execute the rest. fn must not throw.
  void parallel_for(std::size_t n,
                    const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t parts = std::min(threads_.load(), n);
    if (parts <= 1) {
      fn(0, n);
      return;
    }
    const std::size_t chunk = (n + parts - 1) / parts;
    {
      std::unique_lock<std::mutex> lk(mutex_);
      job_fn_ = &fn;
      job_n_ = n;
      job_chunk_ = chunk;
      job_parts_ = parts;
      pending_ = parts - 1;
      next_part_ = 1;
      ++generation_;
    }
    cv_.notify_all();
    fn(0, std::min(chunk, n));
    std::unique_lock<std::mutex> lk(mutex_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    job_fn_ = nullptr;
  }

  ~ThreadPool() { stop_workers(); }

 private:
  ThreadPool() {
    threads_ = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    start_workers(threads_ - 1);
  }

  void start_workers(std::size_t count) {
    shutdown_ = false;
    for (std::size_t i = 0; i < count; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void stop_workers() {
    {
      std::lock_guard<std::mutex> lk(mutex_);
      shutdown_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(mutex_);
      cv_.wait(lk, [&] { return shutdown_ || generation_ != seen; });
      seen = generation_;
      if (shutdown_) return;
      while (job_fn_ != nullptr && next_part_ < job_parts_) {
        const std::size_t part = next_part_++;
        const auto* fn = job_fn_;
        const std::size_t begin = part * job_chunk_;
        const std::size_t end = std::min(begin + job_chunk_, job_n_);
        lk.unlock();
        if (begin < end) (*fn)(begin, end);
        lk.lock();
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::mutex resize_mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t, std::size_t)>* job_fn_ = nullptr;
  std::size_t job_n_ = 0;
  std::size_t job_chunk_ = 0;
  std::size_t job_parts_ = 0;
  std::size_t next_part_ = 0;
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  std::atomic<std::size_t> threads_{1};
  bool shutdown_ = false;
};

inline void parallel_for(std::size_t n,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  ThreadPool::instance().parallel_for(n, fn);
}

}  // namespace cunet
