#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace feasmap {

/// Runs body(i) for i in [0, count) on up to `workers` threads. Indices are claimed
/// dynamically, so body must write only to slot i of any shared output. The first
/// exception thrown by any body is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t count, int workers, Body&& body) {
  const auto threads = static_cast<std::size_t>(std::clamp<long>(workers, 1, static_cast<long>(std::max<std::size_t>(count, 1))));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace feasmap
