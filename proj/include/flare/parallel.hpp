#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace flare {

namespace detail {
inline std::atomic<int>& thread_limit() {
  static std::atomic<int> limit{0};  // 0 = use hardware concurrency
  return limit;
}
}  // namespace detail

// Global cap on the number of threads parallel_for may spawn.
// 0 restores the default (hardware concurrency).
inline void set_thread_limit(int n) { detail::thread_limit().store(n); }

inline int effective_threads() {
  int limit = detail::thread_limit().load();
  if (limit > 0) return limit;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) with a static block partition. The result is
// independent of the thread count as long as fn(i) writes only output slot i.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int threads = std::min(effective_threads(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int begin = t * chunk;
    int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (int i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace flare
