#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gangc {

// Per-worker deques with stealing. Owners pop LIFO for locality; thieves
// take FIFO from a victim. Termination rides on an in-flight counter:
// push increments, completed processing decrements.
template <typename T>
class WorkSet {
 public:
  explicit WorkSet(unsigned workers) : lanes_(workers) {}

  void push(unsigned worker, T item) {
    in_flight_.fetch_add(1, std::memory_order_relaxed);
    Lane& lane = lanes_[worker];
    std::lock_guard lock(lane.mutex);
    lane.items.push_back(std::move(item));
  }

  // Runs fn over items until the whole set is globally exhausted.
  template <typename Fn>
  void drain(unsigned worker, Fn&& fn) {
    T item;
    unsigned spins = 0;
    while (true) {
      if (try_pop(worker, item) || try_steal(worker, item)) {
        spins = 0;
        fn(item);
        in_flight_.fetch_sub(1, std::memory_order_acq_rel);
        continue;
      }
      if (in_flight_.load(std::memory_order_acquire) == 0) return;
      if (++spins > 64) {
        std::this_thread::yield();
        spins = 0;
      }
    }
  }

  bool empty() const { return in_flight_.load(std::memory_order_acquire) == 0; }

 private:
  struct Lane {
    std::mutex mutex;
    std::deque<T> items;
  };

  bool try_pop(unsigned worker, T& out) {
    Lane& lane = lanes_[worker];
    std::lock_guard lock(lane.mutex);
    if (lane.items.empty()) return false;
    out = std::move(lane.items.back());
    lane.items.pop_back();
    return true;
  }

  bool try_steal(unsigned worker, T& out) {
    const std::size_t n = lanes_.size();
    for (std::size_t i = 1; i < n; ++i) {
      Lane& lane = lanes_[(worker + i) % n];
      std::lock_guard lock(lane.mutex);
      if (lane.items.empty()) continue;
      out = std::move(lane.items.front());
      lane.items.pop_front();
      return true;
    }
    return false;
  }

  std::vector<Lane> lanes_;
  std::atomic<std::uint64_t> in_flight_{0};
};

// Fixed pool of GC workers. run() executes one task on every worker id in
// [0, size()); the calling thread doubles as worker 0.
class GcWorkerPool {
 public:
  explicit GcWorkerPool(unsigned workers) : size_(workers == 0 ? 1 : workers) {
    for (unsigned i = 1; i < size_; ++i)
      threads_.emplace_back([this, i] { worker_loop(i); });
  }

  ~GcWorkerPool() {
    {
      std::lock_guard lock(mutex_);
      shutdown_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  unsigned size() const { return size_; }

  void run(const std::function<void(unsigned)>& task) {
    if (size_ == 1) {
      task(0);
      return;
    }
    {
      std::lock_guard lock(mutex_);
      task_ = &task;
      ++generation_;
      remaining_ = size_ - 1;
    }
    cv_.notify_all();
    task(0);
    std::unique_lock lock(mutex_);
    done_cv_.wait(lock, [this] { return remaining_ == 0; });
    task_ = nullptr;
  }

 private:
  void worker_loop(unsigned id) {
    std::uint64_t seen = 0;
    while (true) {
      const std::function<void(unsigned)>* task = nullptr;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return shutdown_ || generation_ != seen; });
        if (shutdown_) return;
        seen = generation_;
        task = task_;
      }
      (*task)(id);
      {
        std::lock_guard lock(mutex_);
        if (--remaining_ == 0) done_cv_.notify_all();
      }
    }
  }

  unsigned size_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(unsigned)>* task_ = nullptr;
  std::uint64_t generation_ = 0;
  unsigned remaining_ = 0;
  bool shutdown_ = false;
};

}  // namespace gangc
