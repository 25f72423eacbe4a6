#pragma once

#include <cstdint>
#include <functional>

namespace icl {

// Worker cap: ICL_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
int worker_count();

// Runs body(i) for i in [0, count) on up to worker_count() threads. Work items
// are claimed dynamically; callers must make body(i) depend only on i so that
// results are independent of scheduling.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& body);

}  // namespace icl
