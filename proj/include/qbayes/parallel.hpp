// Copyright 2026 The qbayes developers
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace qbayes {

inline int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Deterministic chunked map: splits [0, n) into fixed-size chunks, evaluates
// fn(chunk_index, begin, end) -> Partial on a worker pool, and returns the
// partials indexed by chunk. Chunk boundaries depend only on (n, chunk_size),
// so a reduction that merges partials in chunk order is bitwise identical for
// any worker count.
template <typename Partial, typename ChunkFn>
std::vector<Partial> parallel_chunked_map(std::size_t n, std::size_t chunk_size, int threads,
                                          ChunkFn&& fn) {
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = n == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
  std::vector<Partial> partials(n_chunks);
  if (n_chunks == 0) return partials;

  const int workers = std::min<std::size_t>(resolve_thread_count(threads), n_chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      partials[c] = fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return partials;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks || failed.load()) return;
      try {
        partials[c] = fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failed.load()) std::rethrow_exception(error);
  return partials;
}

}  // namespace qbayes
