#pragma once

#include <cstddef>
#include <functional>

namespace reml {

/// Runs fn(i) for i in [0, n) on a small worker pool. The first exception
/// thrown by any task is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

}  // namespace reml
