#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace psgd {

/// SplitMix64 finalizer. Used to expand seeds and to derive independent
/// stream seeds; never used as a stream generator on its own.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derive a stream seed from a user seed and a purpose tag ("init",
/// "noise", ...). The mapping is stable across platforms and releases:
/// FNV-1a over the tag, xor-folded into the seed, then two SplitMix64 rounds.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// xoshiro256** 1.0 (Blackman & Vigna), seeded through SplitMix64.
///
/// Satisfies UniformRandomBitGenerator. Normal deviates come from a
/// Box-Muller transform implemented here rather than
/// std::normal_distribution, whose algorithm is implementation-defined;
/// every stochastic output of the library is then a function of the seed
/// alone.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::string_view tag) : Rng(derive_seed(seed, tag)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal deviate.
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace psgd
