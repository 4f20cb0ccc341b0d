#pragma once

#include <cstddef>
#include <functional>

namespace vl {

/// Number of worker threads used by parallel_for; 0 selects hardware concurrency.
void set_thread_count(unsigned threads);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Each index is executed exactly once; callers
/// write results into per-index slots so output order never depends on
/// scheduling. The first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vl
