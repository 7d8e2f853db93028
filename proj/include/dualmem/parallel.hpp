#pragma once

#include <cstddef>
#include <functional>

namespace dualmem {

/// Worker count used when callers pass 0: $DUALMEM_THREADS if set and
/// positive, else the hardware concurrency (at least 1).
std::size_t default_thread_count();

/// Runs fn(i) for i in [0, n), split into contiguous chunks across threads.
/// fn must only write to per-index state. `threads == 0` means default.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace dualmem
