#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace anchorreg {

// Fixed-size worker pool. parallel_for hands out indices through an atomic
// cursor, so scheduling is nondeterministic but every index runs exactly once.
// Callers must deposit results by index and reduce serially after the call
// returns; that keeps outputs independent of thread count and timing.
class ThreadPool {
 public:
  explicit ThreadPool(int threads = 0) {
    int n = threads > 0 ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    size_ = n;
    workers_.reserve(static_cast<std::size_t>(n - 1));
    for (int t = 0; t + 1 < n; ++t) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  int size() const { return size_; }

  // Runs fn(i) for every i in [begin, end); blocks until all indices complete.
  // Must not be called from inside another parallel_for on the same pool.
  void parallel_for(std::int64_t begin, std::int64_t end,
                    const std::function<void(std::int64_t)>& fn) {
    if (end <= begin) return;
    if (size_ == 1 || end - begin == 1) {
      for (std::int64_t i = begin; i < end; ++i) fn(i);
      return;
    }
    std::unique_lock<std::mutex> lk(mu_);
    job_ = &fn;
    cursor_.store(begin, std::memory_order_relaxed);
    job_end_ = end;
    active_ = static_cast<int>(workers_.size());
    ++generation_;
    error_ = nullptr;
    lk.unlock();
    cv_.notify_all();

    run_indices(fn);

    lk.lock();
    done_cv_.wait(lk, [this] { return active_ == 0; });
    job_ = nullptr;
    if (error_) {
      std::exception_ptr e = error_;
      error_ = nullptr;
      lk.unlock();
      std::rethrow_exception(e);
    }
  }

 private:
  void run_indices(const std::function<void(std::int64_t)>& fn) {
    for (;;) {
      const std::int64_t i = cursor_.fetch_add(1, std::memory_order_relaxed);
      if (i >= job_end_) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::int64_t)>* fn = nullptr;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        fn = job_;
      }
      run_indices(*fn);
      {
        std::lock_guard<std::mutex> lk(mu_);
        if (--active_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::int64_t)>* job_ = nullptr;
  std::atomic<std::int64_t> cursor_{0};
  std::int64_t job_end_ = 0;
  std::uint64_t generation_ = 0;
  int active_ = 0;
  int size_ = 1;
  bool stop_ = false;
  std::exception_ptr error_;
};

}  // namespace anchorreg
