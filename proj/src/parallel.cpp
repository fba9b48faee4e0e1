#include "lab/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lab::numerics {

std::size_t thread_budget() {
  static const std::size_t cached = [] {
    if (const char* env = std::getenv("LAB_THREADS")) {
      char* end = nullptr;
      const unsigned long parsed = std::strtoul(env, &end, 10);
      if (end != env && parsed >= 1) return static_cast<std::size_t>(parsed);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return static_cast<std::size_t>(hc ? hc : 1);
  }();
  return cached;
}

void parallel_chunks(std::size_t count, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t)>& body) {
  if (count == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (count + chunk_size - 1) / chunk_size;
  const std::size_t workers = std::min(thread_budget(), n_chunks);

  if (workers <= 1) {
    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
      const std::size_t begin = chunk * chunk_size;
      body(begin, std::min(begin + chunk_size, count));
    }
    return;
  }

  std::atomic<std::size_t> next_chunk{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t chunk = next_chunk.fetch_add(1);
      if (chunk >= n_chunks) return;
      const std::size_t begin = chunk * chunk_size;
      try {
        body(begin, std::min(begin + chunk_size, count));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lab::numerics
