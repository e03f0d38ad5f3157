#pragma once

#include <cstddef>
#include <functional>

namespace structvi {

/// Number of worker threads: STRUCTVI_THREADS if set and positive,
/// otherwise std::thread::hardware_concurrency() (at least 1).
std::size_t worker_count();

/// Calls body(i) for every i in [0, n), possibly concurrently. Each index is
/// visited exactly once; no ordering is implied. Exceptions thrown by body are
/// rethrown on the calling thread (the first one wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace structvi
