#pragma once

#include <cstddef>
#include <functional>

namespace segkit {

int hardware_threads();

/// Runs fn(0..n-1) on up to `threads` workers. Work items must be
/// independent; exceptions are rethrown on the calling thread. threads <= 1
/// runs inline.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace segkit
