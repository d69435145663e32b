#pragma once

#include <cstddef>
#include <functional>

namespace diffmg {

// Worker cap from the DIFFMG_THREADS environment variable; 1 when unset or
// unparseable.
std::size_t worker_thread_count();

// Runs fn(0) .. fn(n-1), spreading indices over worker threads when more
// than one is allowed. Each index runs exactly once; exceptions are
// rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace diffmg
