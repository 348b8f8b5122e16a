#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace difuada {

/// Seeded random stream. All draws are derived from raw 64-bit engine output
/// so sequences are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with a stream index into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace difuada
