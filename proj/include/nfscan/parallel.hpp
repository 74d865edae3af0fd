#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nfscan {

inline std::size_t default_jobs() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index writes only
/// its own result slot, so the outcome never depends on scheduling. The first
/// exception (lowest index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs == 0) jobs = default_jobs();
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = n;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(jobs);
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  pool.clear();
  if (err) std::rethrow_exception(err);
}

}  // namespace nfscan
