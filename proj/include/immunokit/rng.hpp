#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace immunokit {

// Seeded random source. The engine is std::mt19937_64; the distribution
// transforms are written out here so that draws are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n), unbiased. n must be > 0.
  std::size_t below(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (no cached spare, so draws are stateless
  // apart from the engine).
  double normal();

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with a stream index (splitmix64 finalizer) so that
// independent consumers get decorrelated engines.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace immunokit
