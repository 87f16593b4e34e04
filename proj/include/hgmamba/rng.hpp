#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace hgmamba {

/// SplitMix64 generator. Chosen because it is a named, published algorithm
/// with a trivial state (one u64), bit-identical on every platform, and
/// cheap to split into independent sub-streams via derive_seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform double in [0, 1), 53 random bits.
  double uniform();

  /// Uniform double in (0, 1]; safe as a log() argument.
  double uniform_open();

  /// Standard normal via Box-Muller (two u64 draws per value, no caching so
  /// the stream position is a pure function of the call count).
  double normal();

  /// Uniform integer in [0, n), n >= 1.
  std::uint64_t uniform_below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

/// SplitMix64 finalizer; also used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic sub-seed for a named stochastic component:
/// hash(master, tag, index). Every random decision in the pipeline draws from
/// a sub-stream derived this way, so streams never alias across components.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index);

}  // namespace hgmamba
