#pragma once

#include <cstddef>
#include <functional>

namespace lab::numerics {

/// Worker cap: LAB_THREADS when set (>= 1), otherwise hardware concurrency.
std::size_t thread_budget();

/// Runs body(begin, end) over [0, count) split into fixed-size chunks.  Chunk
/// boundaries depend only on count and chunk_size, never on the worker count,
/// so callers that reduce per-chunk partials in chunk order get identical
/// results at any thread budget.  The first exception thrown by a body is
/// rethrown after all workers stop.
void parallel_chunks(std::size_t count, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace lab::numerics
