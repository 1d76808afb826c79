#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace isclab {

// splitmix64. Everything random in the lab flows through this generator so
// that a (seed, config) pair reproduces the exact same bytes on any platform;
// <random> distributions are implementation-defined and would break that.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Unbiased integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % bound;
  }

  // Inclusive integer range.
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {
    return lo + below(hi - lo + 1);
  }

  // Signed uniform in [-amplitude, +amplitude].
  std::int64_t jitter(std::uint64_t amplitude) {
    if (amplitude == 0) return 0;
    return static_cast<std::int64_t>(below(2 * amplitude + 1)) -
           static_cast<std::int64_t>(amplitude);
  }

  // Uniform double in [0, 1) with 53 bits of entropy.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double real(double lo, double hi) { return lo + (hi - lo) * unit(); }

  bool chance(double p) { return unit() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// One splitmix finalization step; useful as a cheap statistical hash.
inline std::uint64_t hash_mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives an independent sub-seed from a master seed and a named purpose.
// Every stage of the pipeline pulls its seed through this, so stages can be
// re-run in isolation without perturbing each other.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return hash_mix(hash_mix(hash_mix(master ^ h) ^ a) ^ b);
}

// Deterministic hash of an identity tuple into [0, 1).
inline double hash_unit(std::uint64_t a, std::uint64_t b, std::string_view tag) {
  return static_cast<double>(derive_seed(a, tag, b) >> 11) * 0x1.0p-53;
}

}  // namespace isclab
