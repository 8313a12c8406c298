#pragma once

// Replica runner: maps a function over replica indices on a small thread
// pool and returns results in replica order. Each replica draws from its
// own Rng stream, so output is identical for any worker count.

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace rtrw {

inline unsigned effective_workers(unsigned requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

template <class Result, class Fn>
std::vector<Result> run_replicas(std::size_t n_replicas, unsigned workers, Fn&& fn) {
  std::vector<Result> results(n_replicas);
  unsigned n_workers = effective_workers(workers);
  if (n_workers <= 1 || n_replicas <= 1) {
    for (std::size_t i = 0; i < n_replicas; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n_replicas) return;
      results[i] = fn(i);
    }
  };
  std::vector<std::thread> pool;
  if (n_workers > n_replicas) n_workers = static_cast<unsigned>(n_replicas);
  pool.reserve(n_workers);
  for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace rtrw
