#pragma once

#include <cstdint>
#include <functional>
#include <random>

namespace thzlab {

/// Worker cap for parallel maps. Defaults to THZLAB_THREADS or hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs body(i) for i in [0, n). Each index is processed exactly once and
/// results must be written by index, so output never depends on scheduling.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body);

/// splitmix64 finalizer; used to derive independent per-item RNG streams.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Counter-based seed for stream (seed, a, b, c).
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix64(mix64(mix64(mix64(seed) ^ a) ^ b) ^ c);
}

using Rng = std::mt19937_64;

} // namespace thzlab
