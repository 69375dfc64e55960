#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace frost {

// Runs fn(begin, end) over `threads` contiguous ranges of [0, n).
// Results must be written to disjoint, index-addressed slots so the output
// does not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    fn(static_cast<std::size_t>(0), n);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end]() { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace frost
