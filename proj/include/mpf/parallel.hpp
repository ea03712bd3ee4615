#pragma once

#include <cstddef>
#include <functional>

namespace mpf {

// Worker count for intra-op parallelism. Defaults to the MPF_THREADS
// environment variable, or 1 when unset.
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Splits [0, n) into contiguous chunks, one per worker, and runs
// fn(chunk, begin, end). Chunk boundaries depend only on n and the worker
// count, so results that are assembled per chunk are deterministic.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

std::size_t chunk_count(std::size_t n);

}  // namespace mpf
