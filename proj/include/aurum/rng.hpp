#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace aurum {

/// Deterministic generator: xoshiro256** whose 256-bit state is filled from
/// the seed by four splitmix64 steps. The algorithm is part of the on-disk
/// reproducibility contract (mask plans, synthetic corpora, fold plans) and
/// must not change.
///
///  - uniform():  top 53 bits of next_u64() scaled by 2^-53, in [0, 1).
///  - normal():   Box-Muller on two uniforms, the second variate is cached.
///  - below(n):   Lemire's multiply-shift with rejection, unbiased.
///  - permutation / choice_without_replacement: Fisher-Yates from the back.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream for a (seed, stream id) pair; used to give each image,
  /// epoch or fold its own sequence regardless of evaluation order.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  std::uint64_t below(std::uint64_t n);
  double normal(double mean = 0.0, double stddev = 1.0) noexcept;

  std::vector<std::size_t> permutation(std::size_t n);
  std::vector<std::size_t> choice_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& x) noexcept;

}  // namespace aurum
