#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace icrl {

/// Persistent worker pool behind parallel_for. Work is split into chunks of
/// contiguous indices; each index is processed exactly once and reductions
/// inside a work item stay sequential, so results are identical for any
/// thread count (ICRL_THREADS caps the pool size).
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  /// Runs fn(begin, end) over [0, n) split into chunks. Re-entrant calls
  /// from inside a worker run inline to avoid deadlock.
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    if (in_worker_ || size() == 1 || n == 1) {
      fn(0, n);
      return;
    }
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->n = n;
    job->chunks = std::min<int64_t>(n, static_cast<int64_t>(size()) * 4);
    job->pending.store(static_cast<int>(job->chunks), std::memory_order_relaxed);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      current_ = job;
      ++generation_;
    }
    cv_.notify_all();

    in_worker_ = true;  // chunks spawned from here must run inline
    run_job(*job);
    in_worker_ = false;

    std::unique_lock<std::mutex> lock(mutex_);
    done_cv_.wait(lock, [&] { return job->pending.load(std::memory_order_acquire) == 0; });
    if (current_ == job) current_.reset();
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

 private:
  struct Job {
    const std::function<void(int64_t, int64_t)>* fn = nullptr;
    int64_t n = 0, chunks = 0;
    std::atomic<int64_t> next{0};
    std::atomic<int> pending{0};
  };

  ThreadPool() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("ICRL_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1) n = cap;
    }
    if (n < 1) n = 1;
    for (int i = 0; i < n - 1; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    in_worker_ = true;
    uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = current_;
      }
      if (job) run_job(*job);
    }
  }

  void run_job(Job& job) {
    for (;;) {
      const int64_t c = job.next.fetch_add(1, std::memory_order_relaxed);
      if (c >= job.chunks) break;
      const int64_t begin = c * job.n / job.chunks;
      const int64_t end = (c + 1) * job.n / job.chunks;
      if (begin < end) (*job.fn)(begin, end);
      if (job.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lock(mutex_);
        done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable cv_, done_cv_;
  std::shared_ptr<Job> current_;
  uint64_t generation_ = 0;
  bool stop_ = false;
  static thread_local bool in_worker_;
};

inline thread_local bool ThreadPool::in_worker_ = false;

/// Splits [0, n) across the pool; each chunk handler gets [begin, end).
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  ThreadPool::instance().parallel_for(n, fn);
}

}  // namespace icrl
