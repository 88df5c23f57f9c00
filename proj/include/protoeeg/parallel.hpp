#pragma once

#include <cstddef>
#include <functional>

namespace protoeeg {

// Worker cap from PROTOEEG_THREADS, defaulting to the hardware concurrency.
std::size_t worker_count();

// Calls fn(i) for i in [0, n) across worker threads. Each index is handled
// exactly once; callers write results into per-index slots so the outcome
// does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace protoeeg
