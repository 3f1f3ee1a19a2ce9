#pragma once

#include <cstddef>
#include <functional>

namespace repsim {

/// Worker count: REPSIM_THREADS when set to a positive integer, else the
/// number of hardware threads (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to worker_count() threads.
/// Each index runs exactly once. If any call throws, the exception from
/// the lowest failing index is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace repsim
