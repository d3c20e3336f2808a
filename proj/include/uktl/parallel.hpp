#pragma once

#include <cstdint>
#include <functional>

namespace uktl {

/// Caps worker parallelism for parallel_for. 0 restores machine parallelism.
void set_max_threads(int n);
int max_threads();

/// Runs fn(i) for i in [0, n). Each call must write only to its own output
/// slot; results are then independent of the thread schedule. Falls back to
/// a serial loop for small n or max_threads() == 1.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace uktl
