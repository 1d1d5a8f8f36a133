#pragma once

#include <cstddef>
#include <functional>

namespace uae {

// Worker count: UAE_THREADS when set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t thread_count();

// Runs fn(i) for i in [0, count) over contiguous chunks. Callers must only
// write to per-index state so the result is independent of the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace uae
