#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace stepbcd {

/// Seeded random stream.
///
/// Built on std::mt19937_64, whose output sequence is fixed by the standard.
/// The normal and integer draws are implemented here rather than through
/// <random> distributions, whose algorithms vary between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal (Marsaglia polar method).
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Independent stream for a named stage, derived from this stream's seed only.
  Rng fork(std::string_view stage) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Splittable sub-seed: mixes the master seed with a hash of the stage name.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace stepbcd
