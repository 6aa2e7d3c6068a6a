#pragma once

#include <cstddef>
#include <functional>

namespace hazardforge {

// Worker count: HAZARDFORGE_THREADS when set and positive, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker;
// callers write results into per-index slots so the outcome does not depend
// on the worker count. Exceptions from workers are rethrown on the caller
// (the one with the lowest index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t max_workers = 0);

}  // namespace hazardforge
