#pragma once

#include <cstddef>
#include <functional>

namespace tpsf {

/// Thread count from TPSF_THREADS, else hardware concurrency (at least 1).
unsigned default_threads();

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items are
/// claimed dynamically, so fn must write only to index-owned state; results are
/// then independent of the thread count. threads <= 1 runs inline.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)> &fn);

/// Keeps freed heap memory in the process instead of unmapping it. Training
/// allocates multi-megabyte activation buffers per batch; with the glibc
/// defaults every batch pays the page faults again. Call once from main().
void retain_freed_memory();

} // namespace tpsf
