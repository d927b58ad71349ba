#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace trtm::util {

// Worker count: TRTM_WORKERS env var if set, else hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("TRTM_WORKERS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n). Work units must be independent; each writes
// only its own output slot, so results do not depend on scheduling.
template <typename F>
void parallel_for(int n, F&& fn, int workers = -1) {
  if (workers < 0) workers = worker_count();
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min(workers, n) - 1;
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

}  // namespace trtm::util
