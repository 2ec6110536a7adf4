#ifndef MSGMRF_PARALLEL_HPP
#define MSGMRF_PARALLEL_HPP

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace msgmrf {

/// Runs fn(i) for i in [0, n) on up to worker_count threads. Work items are
/// claimed through an atomic counter; results must be written to per-item
/// slots so the outcome is independent of scheduling. Rethrows the first
/// exception after all workers join.
inline void parallel_for(int worker_count, int n,
                         const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (worker_count <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int threads = std::min(worker_count, n);
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      while (!failed.load(std::memory_order_relaxed)) {
        const int i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace msgmrf

#endif
