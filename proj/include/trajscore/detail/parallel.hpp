#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

/**
 * Minimal index-ordered fan-out: workers pull indices from a shared counter,
 * so results land wherever the caller's fn stores them (typically a
 * pre-sized vector slot per index, which keeps output order equal to input
 * order no matter the interleaving). The first exception thrown by fn is
 * rethrown on the calling thread after all workers join.
 */
namespace trajscore::detail {

template <typename F>
inline void parallel_for(size_t count, int workers, F&& fn) {
  if (count == 0) return;
  if (workers < 1) workers = 1;
  size_t thread_count = std::min(static_cast<size_t>(workers), count);
  if (thread_count == 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(thread_count);
  for (size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace trajscore::detail
