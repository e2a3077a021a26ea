#pragma once

// Deterministic, platform-independent randomness.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard distributions are NOT portable across library
// implementations, so bounded integers, uniforms, normals and shuffles are
// derived here from raw engine output:
//
//   uniform_below(n)   rejection sampling on the top of the 64-bit range
//   uniform01()        (x >> 11) * 2^-53, in [0, 1)
//   normal()           Box-Muller on two uniforms, second value cached
//   shuffle()          Fisher-Yates from the back, j = uniform_below(i + 1)
//
// mix64 is the SplitMix64 finalizer, a bijection on 64-bit integers.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace layerprobe {

std::uint64_t mix64(std::uint64_t x) noexcept;

/// FNV-1a over the bytes of `text`; used to key per-item values by item id.
std::uint64_t hash_string(std::string_view text) noexcept;

/// Standard normal draw that depends only on (seed, key, stream).
double keyed_normal(std::uint64_t seed, std::uint64_t key, std::uint64_t stream) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  std::uint64_t uniform_below(std::uint64_t n);
  double uniform01();
  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      using std::swap;
      swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace layerprobe
