#pragma once

#include <cstddef>
#include <functional>

namespace drf {

/// Worker count: DRF_THREADS if set to a positive integer, else all cores.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) over contiguous chunks on up to
/// worker_count() threads. Callers write per-index results into their own
/// slots and reduce afterwards in index order, so results do not depend on
/// the thread count. Small ranges run inline.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t min_parallel = 256);

}  // namespace drf
