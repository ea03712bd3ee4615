#include "mpf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace mpf {

namespace {

std::size_t threads_from_env() {
  if (const char* env = std::getenv("MPF_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<std::size_t>& configured() {
  static std::atomic<std::size_t> n{threads_from_env()};
  return n;
}

constexpr std::size_t kMinRowsPerChunk = 256;

}  // namespace

std::size_t thread_count() { return configured().load(); }

void set_thread_count(std::size_t n) { configured().store(std::max<std::size_t>(1, n)); }

std::size_t chunk_count(std::size_t n) {
  const std::size_t by_size = std::max<std::size_t>(1, n / kMinRowsPerChunk);
  return std::min(thread_count(), by_size);
}

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t chunks = chunk_count(n);
  if (chunks <= 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    workers.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace mpf
