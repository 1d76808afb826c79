#pragma once

#include <cstdint>

namespace isclab {

// Per-record overhead of the gateway's transport encryption (header, IV,
// MAC). The value is a corpus knob, not a wire-protocol claim.
inline constexpr std::uint64_t kDefaultCipherOverhead = 29;

// Observable ciphertext length of a plaintext: block-rounded to 16 bytes
// plus the constant record overhead. Monotone non-decreasing in the input.
constexpr std::uint64_t cipher_len(std::uint64_t plaintext_bytes,
                                   std::uint64_t overhead = kDefaultCipherOverhead) {
  return 16 * ((plaintext_bytes + 15) / 16) + overhead;
}

}  // namespace isclab
