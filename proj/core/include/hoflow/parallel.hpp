#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace hoflow {

/// Number of workers for a requested count; <= 0 selects the hardware count.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls f(i) for i in [0, n) on up to `threads` workers, each handling a
/// contiguous block. The first exception thrown by any worker is rethrown.
template <class F> void parallel_for(int n, int threads, F&& f) {
  const int workers = std::min(std::max(1, threads), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      const int lo = static_cast<int>(static_cast<long long>(n) * w / workers);
      const int hi = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
      try {
        for (int i = lo; i < hi; ++i) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace hoflow
