#pragma once

#include <cstddef>
#include <functional>

namespace gofl {

/// Worker cap: GOFL_THREADS when set to a positive integer, else the
/// machine's hardware concurrency (at least 1).
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) on up to `workers` threads. Each index must
/// write only its own outputs, which keeps results independent of the
/// worker count. The first exception thrown by any call is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t workers = worker_count());

}  // namespace gofl
