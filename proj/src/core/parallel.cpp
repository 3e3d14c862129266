#include "core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spikemap {
namespace {

std::atomic<int> g_workers{0};

int default_workers() {
  if (const char* env = std::getenv("SPIKEMAP_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

int worker_count() {
  int n = g_workers.load();
  if (n <= 0) {
    n = default_workers();
    g_workers.store(n);
  }
  return n;
}

void set_worker_count(int workers) { g_workers.store(workers > 0 ? workers : default_workers()); }

void parallel_for(std::size_t chunks, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        body(c);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(chunks);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double ordered_sum(std::size_t chunks, const std::function<double(std::size_t)>& partial) {
  std::vector<double> parts(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c) { parts[c] = partial(c); });
  double total = 0.0;
  for (double p : parts) total += p;
  return total;
}

}  // namespace spikemap
