#pragma once

#include <cstddef>
#include <functional>

namespace aquaforge {

int hardware_threads();

// Runs fn(i) for i in [0, n) on up to `threads` workers (<=0 means all
// cores). Items must be independent; each writes only its own output slot,
// so results do not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace aquaforge
