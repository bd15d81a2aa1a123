#include "aurum/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "aurum/error.hpp"

namespace aurum {

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& s : state_) s = splitmix64(sm);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t mix = seed ^ 0x5851F42D4C957F2DULL;
  std::uint64_t a = splitmix64(mix);
  std::uint64_t s = stream + 0x14057B7EF767814FULL;
  std::uint64_t b = splitmix64(s);
  return Rng(a ^ rotl(b, 17));
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ParameterError("below(0) has no valid outcome");
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal(double mean, double stddev) noexcept {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return mean + stddev * cached_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return mean + stddev * radius * std::cos(angle);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  return choice_without_replacement(n, n);
}

std::vector<std::size_t> Rng::choice_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) {
    throw ParameterError("cannot choose " + std::to_string(k) + " of " + std::to_string(n) +
                         " without replacement");
  }
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  // Partial Fisher-Yates from the back: slot i receives a uniform pick of [0, i].
  for (std::size_t drawn = 0; drawn < k; ++drawn) {
    const std::size_t i = n - 1 - drawn;
    const auto j = static_cast<std::size_t>(below(i + 1));
    std::swap(pool[i], pool[j]);
  }
  return {pool.end() - static_cast<std::ptrdiff_t>(k), pool.end()};
}

}  // namespace aurum
