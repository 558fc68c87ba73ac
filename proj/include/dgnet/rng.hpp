#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dgnet {

/// mt19937_64 with fixed distribution mappings. The standard distributions
/// are implementation-defined; these are not, so a seed reproduces the same
/// draws on every toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  std::int64_t integer(std::int64_t lo, std::int64_t hi);  // inclusive
  double normal();

  /// Independent stream for a (seed, key...) tuple, derived with seed_seq.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::mt19937_64& engine() { return engine_; }

 private:
  explicit Rng(std::seed_seq& seq) : engine_(seq) {}

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dgnet
