#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace monodense {

/// Static contiguous partition of [begin, end) over `num_threads` workers.
/// Each index is processed exactly once; workers write disjoint outputs, so
/// results are identical for any worker count.
template <typename Fn>
inline void parallel_for(int begin, int end, int num_threads, Fn&& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  if (num_threads <= 1 || n == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  const int workers = std::min(num_threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + static_cast<int>(static_cast<long long>(n) * w / workers);
    const int hi = begin + static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline int default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace monodense
