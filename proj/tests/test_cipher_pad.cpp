#include <doctest.h>

#include <cmath>

#include "isclab/cipher.hpp"
#include "isclab/countermeasures.hpp"
#include "isclab/errors.hpp"

using namespace isclab;

namespace {

// Independent ceiling for the cross-check.
std::uint64_t blocks_up(std::uint64_t v) {
  return static_cast<std::uint64_t>(std::ceil(static_cast<double>(v) / 16.0));
}

// Loop-based padding oracle: the least multiple of x strictly above L.
std::uint64_t pad_oracle(std::uint64_t L, std::uint64_t x) {
  std::uint64_t n = 1;
  while (n * x <= L) ++n;
  return n * x;
}

}  // namespace

TEST_CASE("cipher_len basics") {
  CHECK(cipher_len(0) == kDefaultCipherOverhead);
  CHECK(cipher_len(100) == 112 + kDefaultCipherOverhead);
  CHECK(cipher_len(100) == 16 * blocks_up(100) + kDefaultCipherOverhead);
  CHECK(cipher_len(16) == 16 + kDefaultCipherOverhead);
  CHECK(cipher_len(17) == 32 + kDefaultCipherOverhead);
  CHECK(cipher_len(0, 13) == 13);
}

TEST_CASE("cipher_len is monotone and overhead-bounded") {
  for (std::uint64_t L = 1; L <= 4096; ++L) {
    CHECK(cipher_len(L + 1) >= cipher_len(L));
    const std::uint64_t extra = cipher_len(L) - L;
    CHECK(extra >= kDefaultCipherOverhead);
    CHECK(extra <= kDefaultCipherOverhead + 15);
    CHECK(cipher_len(L) == 16 * blocks_up(L) + kDefaultCipherOverhead);
  }
}

TEST_CASE("pad_length MultipleOf follows the strict inequality") {
  CHECK(pad_length(600, PaddingPolicy::multiple_of(200)) == 800);
  CHECK(pad_length(1, PaddingPolicy::multiple_of(200)) == 200);
  // An exact multiple pads up a whole block.
  CHECK(pad_length(200, PaddingPolicy::multiple_of(200)) == 400);
  CHECK(pad_length(199, PaddingPolicy::multiple_of(200)) == 200);
}

TEST_CASE("pad_length MaxLen") {
  const PaddingPolicy p = PaddingPolicy::max_len(1500);
  CHECK(pad_length(1, p) == 1500);
  CHECK(pad_length(1500, p) == 1500);
  CHECK_THROWS_AS(pad_length(1501, p), PolicyError);
}

TEST_CASE("pad_length agrees with the loop oracle") {
  for (std::uint64_t x : {100ull, 200ull, 500ull}) {
    const PaddingPolicy p = PaddingPolicy::multiple_of(x);
    for (std::uint64_t L = 1; L <= 5000; ++L) {
      const std::uint64_t r = pad_length(L, p);
      CHECK(r == pad_oracle(L, x));
      CHECK(r > L);
      CHECK(r <= L + x);
      CHECK(r % x == 0);
    }
  }
}

TEST_CASE("policy validation") {
  CHECK_THROWS_AS(PaddingPolicy::max_len(0).validate(), ConfigError);
  CHECK_THROWS_AS(PaddingPolicy::multiple_of(0).validate(), ConfigError);
  CHECK_THROWS_AS(pad_length(0, PaddingPolicy::multiple_of(8)), ContractError);
  BatchPolicy b;
  b.threshold_n = 0;
  CHECK_THROWS_AS(b.validate(), ConfigError);
}
