#pragma once

#include <cstddef>
#include <functional>

namespace parisi {

/// Process-wide worker count (default 1). Results never depend on it: work is split
/// into fixed index ranges and reductions run in index order.
void set_workers(int n);
int workers();

/// Calls body(i) for i in [0, n), distributing contiguous chunks over the workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace parisi
