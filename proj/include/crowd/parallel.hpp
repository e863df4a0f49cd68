#pragma once

#include <functional>

namespace crowd {

// Worker count for parallel inner loops, read once from CROWD_THREADS
// (default 1).
int thread_count();

// Runs body(k) for k in [begin, end) in contiguous chunks, one per worker.
// body must not touch shared mutable state outside its own k.
void parallel_for(int begin, int end, const std::function<void(int)>& body);

}  // namespace crowd
