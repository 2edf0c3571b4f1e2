#include "stochunfold/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>

namespace stochunfold {

int default_workers() {
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::int64_t count, int workers,
                  const std::function<void(std::int64_t)>& f) {
  if (count <= 0) return;
  workers = std::max(1, static_cast<int>(std::min<std::int64_t>(workers, count)));
  if (workers == 1) {
    for (std::int64_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  // Contiguous blocks: worker w handles [w*chunk + min(w,rem) ...).
  const std::int64_t chunk = count / workers;
  const std::int64_t rem = count % workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk + std::min<std::int64_t>(w, rem);
    const std::int64_t hi = lo + chunk + (w < rem ? 1 : 0);
    pool.emplace_back([&, lo, hi]() {
      try {
        for (std::int64_t i = lo; i < hi; ++i) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace stochunfold
