#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace gapmrf {

namespace detail {
inline int& thread_override() {
  static int value = 0;  // 0 = not overridden
  return value;
}
}  // namespace detail

// Worker count: explicit override, then GAPMRF_THREADS, then hardware.
inline int thread_count() {
  if (detail::thread_override() > 0) return detail::thread_override();
  if (const char* env = std::getenv("GAPMRF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline void set_thread_count(int n) { detail::thread_override() = n; }

// Runs f(begin, end) over [0, n) split into fixed-size chunks. Chunk
// boundaries depend only on n and grain, never on the worker count, so
// outputs written per-index are bitwise identical for any thread count.
template <class F>
void parallel_for(std::ptrdiff_t n, F&& f, std::ptrdiff_t grain = 1) {
  if (n <= 0) return;
  const std::ptrdiff_t chunk = grain < 1 ? 1 : grain;
  const std::ptrdiff_t num_chunks = (n + chunk - 1) / chunk;
  const int workers = std::min<std::ptrdiff_t>(thread_count(), num_chunks);
  if (workers <= 1) {
    for (std::ptrdiff_t i = 0; i < num_chunks; ++i)
      f(i * chunk, std::min(n, (i + 1) * chunk));
    return;
  }
  std::atomic<std::ptrdiff_t> next{0};
  auto run = [&] {
    for (;;) {
      const std::ptrdiff_t i = next.fetch_add(1);
      if (i >= num_chunks) break;
      f(i * chunk, std::min(n, (i + 1) * chunk));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
}

}  // namespace gapmrf
