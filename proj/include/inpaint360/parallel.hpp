#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace inpaint360 {

// Runs body(i) for i in [0, n) on up to `workers` threads. Work items must
// not depend on which thread runs them; callers that reduce must do so over
// per-item (not per-thread) buffers to stay worker-count invariant.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
  const std::size_t w = std::min<std::size_t>(std::max(workers, 1), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += w) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace inpaint360
