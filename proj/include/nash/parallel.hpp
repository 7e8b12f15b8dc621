#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace nash {

/// --threads fallback: NASH_THREADS, else the hardware concurrency.
inline int default_threads() {
  if (const char* env = std::getenv("NASH_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t > 0) return t;
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(i) for i in [0, n) over contiguous blocks. Each index is written by
/// exactly one worker, so results do not depend on the thread count.
template <class F>
void parallel_for(long n, int threads, F&& f) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max(1L, n))));
  if (threads == 1) {
    for (long i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex mu;
  const long block = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const long lo = t * block, hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f, &error, &mu] {
      try {
        for (long i = lo; i < hi; ++i) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace nash
