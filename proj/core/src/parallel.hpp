#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace rpbart::detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers in contiguous
/// blocks. fn must only write to slot i of its output.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([=] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace rpbart::detail
