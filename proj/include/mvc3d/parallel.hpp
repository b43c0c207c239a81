#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "mvc3d/common.hpp"

namespace mvc3d {

// Worker count: MVC3D_THREADS if set, else hardware concurrency, clamped to [1, 256].
inline int worker_count() {
  static const int n = [] {
    long v = 0;
    if (const char* env = std::getenv("MVC3D_THREADS")) {
      char* end = nullptr;
      v = std::strtol(env, &end, 10);
      if (end == env) v = 0;
    }
    if (v <= 0) v = static_cast<long>(std::thread::hardware_concurrency());
    if (v <= 0) v = 1;
    if (v > 256) v = 256;
    return static_cast<int>(v);
  }();
  return n;
}

namespace detail {

// Persistent pool; parallel_for broadcasts one stripe per worker. Callers must
// write disjoint outputs with a fixed inner order, so results are identical for
// any worker count.
class Pool {
 public:
  static Pool& instance() {
    static Pool pool(worker_count());
    return pool;
  }

  void run(Index n, const std::function<void(Index)>& fn) {
    const int workers = static_cast<int>(threads_.size()) + 1;
    if (workers == 1 || n <= 1) {
      for (Index i = 0; i < n; ++i) fn(i);
      return;
    }
    std::unique_lock<std::mutex> lock(mutex_);
    job_ = &fn;
    job_n_ = n;
    job_workers_ = workers;
    pending_ = static_cast<int>(threads_.size());
    ++generation_;
    lock.unlock();
    start_cv_.notify_all();
    run_stripe(0);
    lock.lock();
    done_cv_.wait(lock, [&] { return pending_ == 0; });
    job_ = nullptr;
  }

 private:
  explicit Pool(int workers) {
    for (int w = 1; w < workers; ++w)
      threads_.emplace_back([this, w] { worker_loop(w); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
      ++generation_;
    }
    start_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void worker_loop(int id) {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      lock.unlock();
      run_stripe(id);
      lock.lock();
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }

  void run_stripe(int id) {
    const Index chunk = (job_n_ + job_workers_ - 1) / job_workers_;
    const Index lo = chunk * id;
    const Index hi = std::min(job_n_, lo + chunk);
    for (Index i = lo; i < hi; ++i) (*job_)(i);
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_, done_cv_;
  const std::function<void(Index)>* job_ = nullptr;
  Index job_n_ = 0;
  int job_workers_ = 1;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace detail

inline void parallel_for(Index n, const std::function<void(Index)>& fn) {
  detail::Pool::instance().run(n, fn);
}

}  // namespace mvc3d
