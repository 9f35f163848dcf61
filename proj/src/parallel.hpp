#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace structfill::detail {

/// Runs fn(i) for i in [0, n) on a few worker threads; fn must not share mutable state.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, 16);
  if (n <= 1 || workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace structfill::detail
