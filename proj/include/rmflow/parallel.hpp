#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rmflow {

// Runs fn(row) for every row in [0, rows). Rows are split into contiguous
// blocks, one per worker; each row is processed exactly once, so any
// computation whose per-row results land in disjoint output slots is
// bit-identical for every thread count. Reductions stay sequential at the
// call sites for the same reason.
inline void parallel_for_rows(int rows, int threads,
                              const std::function<void(int)>& fn) {
  if (rows <= 0) return;
  if (threads < 1) threads = 1;
  if (threads == 1 || rows == 1) {
    for (int y = 0; y < rows; ++y) fn(y);
    return;
  }

  if (threads > rows) threads = rows;
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&](int begin, int end) {
    try {
      for (int y = begin; y < end; ++y) fn(y);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int base = rows / threads;
  const int extra = rows % threads;
  int begin = 0;
  for (int i = 0; i < threads; ++i) {
    const int len = base + (i < extra ? 1 : 0);
    pool.emplace_back(worker, begin, begin + len);
    begin += len;
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rmflow
