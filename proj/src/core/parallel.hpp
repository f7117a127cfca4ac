#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace boneforge {

// Worker count used by data-parallel loops. 0 selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

// Work is split into fixed chunks of `chunk` items whose layout does not
// depend on the thread count; chunk c covers [c*chunk, min(n,(c+1)*chunk)).
// Reductions combine per-chunk partials in ascending chunk order, so results
// are bit-identical for any thread count.
inline constexpr std::size_t kDefaultChunk = 256;

void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t chunk_index, std::size_t begin, std::size_t end)>& body);

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         std::size_t chunk = kDefaultChunk) {
  parallel_chunks(n, chunk, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) body(i);
  });
}

inline std::size_t chunk_count(std::size_t n, std::size_t chunk) { return (n + chunk - 1) / chunk; }

// Ordered reduction: `partial(begin, end)` produces a value per chunk, then
// values are folded left-to-right with `combine`.
template <class T, class Partial, class Combine>
T parallel_reduce(std::size_t n, std::size_t chunk, T init, Partial partial, Combine combine) {
  std::vector<T> parts(chunk_count(n, chunk), init);
  parallel_chunks(n, chunk, [&](std::size_t c, std::size_t b, std::size_t e) { parts[c] = partial(b, e); });
  T acc = init;
  for (auto& p : parts) acc = combine(std::move(acc), p);
  return acc;
}

}  // namespace boneforge
