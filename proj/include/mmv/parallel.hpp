#pragma once

#include <cstddef>
#include <functional>

namespace mmv {

// Worker count used by parallel_for. 0 or negative selects 1. Work is split
// into contiguous index ranges and every index writes only its own output, so
// results do not depend on the count.
void set_thread_count(int threads);
int thread_count();

// Calls fn(begin, end) on disjoint ranges covering [0, n). Runs inline when
// one thread is configured or n < grain.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain = 64);

}  // namespace mmv
