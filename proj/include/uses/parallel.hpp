// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace uses {

// Intra-op worker count, capped by the USES_NUM_THREADS environment variable.
// Defaults to 1: results are identical for any thread count (workers own
// disjoint output ranges and each range is reduced sequentially), but single
// thread keeps profiling and debugging simple.
inline int num_threads() {
  static const int n = [] {
    const char* env = std::getenv("USES_NUM_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    if (v < 1) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    if (hw > 0 && v > static_cast<int>(hw)) v = static_cast<int>(hw);
    return v;
  }();
  return n;
}

// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs.
template <typename F>
void parallel_for(int64_t n, F&& fn) {
  const int nt = num_threads();
  if (nt <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  const int threads = static_cast<int>(std::min<int64_t>(nt, n));
  workers.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      const int64_t lo = n * t / threads;
      const int64_t hi = n * (t + 1) / threads;
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace uses
