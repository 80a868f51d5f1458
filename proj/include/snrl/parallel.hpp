#ifndef SNRL_PARALLEL_HPP_
#define SNRL_PARALLEL_HPP_

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace snrl {

/// Worker cap from SNRL_THREADS, defaulting to 1.
inline int worker_count_from_env() {
  const char* v = std::getenv("SNRL_THREADS");
  if (v == nullptr) return 1;
  try {
    return std::max(1, std::stoi(v));
  } catch (const std::exception&) {
    return 1;
  }
}

/// Calls fn(i) for i in [0, n) over contiguous chunks, one thread per chunk.
/// fn must only touch state owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t chunks = std::min(w, n);
  const std::size_t per = (n + chunks - 1) / chunks;
  std::vector<std::jthread> threads;
  threads.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t lo = c * per;
    const std::size_t hi = std::min(n, lo + per);
    if (lo >= hi) break;
    threads.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

}  // namespace snrl

#endif  // SNRL_PARALLEL_HPP_
