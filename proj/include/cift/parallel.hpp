#pragma once

#include <cstddef>
#include <functional>

namespace cift {

// Worker count: CIFT_THREADS when set and positive, otherwise every core.
int thread_count();

// Runs body(i) for i in [0, n). Each index is handled exactly once; callers
// write results into per-index slots so the outcome does not depend on
// scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace cift
