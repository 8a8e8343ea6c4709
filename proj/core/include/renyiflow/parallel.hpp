#pragma once

#include <cstddef>
#include <functional>

namespace renyiflow {

/// Worker cap: RENYI_FLOW_THREADS if set (clamped to >= 1), else a small
/// hardware-derived default. Outputs never depend on this value.
std::size_t worker_count();

/// Runs body(i) for i in [0, n), split into contiguous index ranges across
/// workers. The body must only write state owned by index i; every reduction
/// over the results happens afterwards, in index order, on the caller thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace renyiflow
