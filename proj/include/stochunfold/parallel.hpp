// Deterministic worker pool: static partition, each worker writes its own
// preallocated slots, results identical for any worker count.
#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace stochunfold {

int default_workers();

// Runs f(i) for i in [0, count). Work item i always maps to the same result
// slot regardless of worker count; f must only write state owned by item i.
void parallel_for(std::int64_t count, int workers,
                  const std::function<void(std::int64_t)>& f);

}  // namespace stochunfold
