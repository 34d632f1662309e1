#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nlslab {

namespace detail {
inline std::atomic<unsigned> &thread_setting() {
  static std::atomic<unsigned> threads{1};
  return threads;
}
} // namespace detail

/// 0 selects std::thread::hardware_concurrency().
inline void set_threads(unsigned n) {
  if (n == 0)
    n = std::max(1u, std::thread::hardware_concurrency());
  detail::thread_setting().store(n);
}

inline unsigned threads() { return detail::thread_setting().load(); }

/// Runs body(i) for i in [0, n) on contiguous static chunks.
/// Each index is processed by exactly one thread and bodies must not share
/// mutable state, so results do not depend on the thread count.
template <class Body> void parallel_for(std::size_t n, Body &&body) {
  const std::size_t workers = std::min<std::size_t>(threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end)
      break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i)
          body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error)
          first_error = std::current_exception();
      }
    });
  }
  for (auto &t : pool)
    t.join();
  if (first_error)
    std::rethrow_exception(first_error);
}

} // namespace nlslab
