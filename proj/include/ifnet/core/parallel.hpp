#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ifnet {

namespace detail {
inline std::atomic<int>& thread_count_setting() {
  static std::atomic<int> count{static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))};
  return count;
}
}  // namespace detail

inline void set_num_threads(int n) { detail::thread_count_setting() = std::max(1, n); }
inline int num_threads() { return detail::thread_count_setting().load(); }

// Splits [begin, end) into chunks of `grain` elements and calls fn(chunk_begin, chunk_end).
// Chunk boundaries depend only on the range and the grain, never on the thread count,
// so any per-chunk computation produces the same result single- or multi-threaded.
// The exception of the lowest-indexed failing chunk is rethrown.
template <class Fn>
void parallel_for(std::size_t begin, std::size_t end, std::size_t grain, Fn&& fn) {
  if (end <= begin) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (end - begin + grain - 1) / grain;
  const int threads = static_cast<int>(std::min<std::size_t>(num_threads(), chunks));
  auto run_chunk = [&](std::size_t c) {
    const std::size_t lo = begin + c * grain;
    fn(lo, std::min(end, lo + grain));
  };
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(chunks);
  auto worker = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      try {
        run_chunk(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ifnet
