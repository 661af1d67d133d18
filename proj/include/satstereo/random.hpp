#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace satstereo {

/// Derives an independent stream seed for a named pipeline stage.
/// seed' = splitmix64(run_seed ^ fnv1a64(stage)), stable across platforms.
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view stage);

/// Seeded generator with platform-independent draws.
///
/// std::uniform_int_distribution and std::shuffle are implementation-defined,
/// so bounded draws are done here by rejection on the raw mt19937_64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n);

  /// Uniform real in [0, 1).
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace satstereo
