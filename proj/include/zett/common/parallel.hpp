#pragma once

#include <cstddef>
#include <functional>

namespace zett {

// Worker count: ZETT_THREADS if set (>= 1), otherwise hardware concurrency.
std::size_t thread_count();

// Splits [0, n) into contiguous chunks and runs `body(begin, end)` on each.
// Chunk boundaries depend only on n and the thread count, so any per-index
// computation stays bit-identical to the serial result.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace zett
