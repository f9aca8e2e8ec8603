#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace mct {

// Process-wide worker count used by the pipeline stages (--jobs).
int default_jobs();
void set_default_jobs(int jobs);

// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker and
// results must be written to disjoint slots, so output does not depend on the
// number of workers.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, int jobs = default_jobs()) {
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mct
