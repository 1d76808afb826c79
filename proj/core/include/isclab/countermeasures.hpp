#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "isclab/packets.hpp"

namespace isclab {

// Fixed-size padding applied to every plaintext before encryption.
struct PaddingPolicy {
  enum class Mode : std::uint8_t { MaxLen, MultipleOf };

  Mode mode = Mode::MultipleOf;
  std::uint64_t max_bytes = 0;  // MaxLen target
  std::uint64_t x_bytes = 0;    // MultipleOf block

  static PaddingPolicy max_len(std::uint64_t max_bytes);
  static PaddingPolicy multiple_of(std::uint64_t x_bytes);

  void validate() const;  // ConfigError on nonsensical parameters
};

// Padded length of an L-byte plaintext, L >= 1.
//   MaxLen        -> max_bytes (PolicyError if L exceeds it)
//   MultipleOf(x) -> n*x for the least n with n*x > L (strictly greater,
//                    so an exact multiple is padded up one full block)
std::uint64_t pad_length(std::uint64_t plaintext_bytes, const PaddingPolicy& policy);

struct BatchPolicy {
  std::uint32_t threshold_n = 8;
  bool flush_on_timeout = false;  // latency/security trade, off by default
  double timeout_s = 0.0;

  void validate() const;
};

struct Batch {
  std::uint64_t batch_seq = 0;  // verification tag
  std::vector<PacketGroundTruth> packets;
  std::uint32_t dummy_count = 0;
};

// Groups the incoming stream into batches of exactly n packets. The final
// partial batch is held until flush(), which tops it up with flagged dummy
// packets. Outputs of an accepted batch leave the chain together, in an
// order randomized by the chain (see ServiceChain::process_batch).
class BatchGate {
 public:
  explicit BatchGate(BatchPolicy policy);

  std::optional<Batch> push(const PacketGroundTruth& packet);
  std::optional<Batch> flush();
  std::size_t pending() const { return pending_.size(); }

 private:
  Batch take_batch();

  BatchPolicy policy_;
  std::vector<PacketGroundTruth> pending_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_dummy_uid_ = 0;
  double oldest_pending_time_ = 0.0;
};

// Enclave-side gate: processing starts only on a full batch carrying the
// expected (never yet seen) sequence tag, so the untrusted host cannot
// trickle packets one at a time or replay an old batch.
class BatchVerifier {
 public:
  explicit BatchVerifier(std::uint32_t threshold_n);

  bool verify(const Batch& batch);  // accepting advances the expected tag
  void reset();

 private:
  std::uint32_t threshold_n_;
  std::uint64_t expected_seq_ = 0;
};

struct CountermeasureConfig {
  std::optional<PaddingPolicy> padding;
  std::optional<BatchPolicy> batching;

  bool any() const { return padding.has_value() || batching.has_value(); }
};

}  // namespace isclab
