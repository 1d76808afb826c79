#include "isclab/countermeasures.hpp"

#include "isclab/errors.hpp"

namespace isclab {

PaddingPolicy PaddingPolicy::max_len(std::uint64_t max_bytes) {
  PaddingPolicy p;
  p.mode = Mode::MaxLen;
  p.max_bytes = max_bytes;
  return p;
}

PaddingPolicy PaddingPolicy::multiple_of(std::uint64_t x_bytes) {
  PaddingPolicy p;
  p.mode = Mode::MultipleOf;
  p.x_bytes = x_bytes;
  return p;
}

void PaddingPolicy::validate() const {
  if (mode == Mode::MaxLen && max_bytes < 1)
    throw ConfigError("MaxLen padding needs max_bytes >= 1");
  if (mode == Mode::MultipleOf && x_bytes < 1)
    throw ConfigError("MultipleOf padding needs x_bytes >= 1");
}

std::uint64_t pad_length(std::uint64_t plaintext_bytes, const PaddingPolicy& policy) {
  if (plaintext_bytes < 1) throw ContractError("pad_length requires L >= 1");
  switch (policy.mode) {
    case PaddingPolicy::Mode::MaxLen:
      if (plaintext_bytes > policy.max_bytes)
        throw PolicyError("plaintext of " + std::to_string(plaintext_bytes) +
                          " bytes exceeds MaxLen target " + std::to_string(policy.max_bytes));
      return policy.max_bytes;
    case PaddingPolicy::Mode::MultipleOf: {
      // Least n with n*x strictly greater than L.
      const std::uint64_t n = plaintext_bytes / policy.x_bytes + 1;
      return n * policy.x_bytes;
    }
  }
  throw ContractError("unknown padding mode");
}

void BatchPolicy::validate() const {
  if (threshold_n < 1) throw ConfigError("batch threshold must be >= 1");
  if (flush_on_timeout && timeout_s <= 0.0)
    throw ConfigError("flush_on_timeout needs a positive timeout");
}

BatchGate::BatchGate(BatchPolicy policy) : policy_(policy) { policy_.validate(); }

Batch BatchGate::take_batch() {
  Batch batch;
  batch.batch_seq = next_seq_++;
  batch.packets = std::move(pending_);
  pending_.clear();
  return batch;
}

std::optional<Batch> BatchGate::push(const PacketGroundTruth& packet) {
  std::optional<Batch> timed_out;
  if (policy_.flush_on_timeout && !pending_.empty() &&
      packet.arrival_time - oldest_pending_time_ > policy_.timeout_s) {
    timed_out = flush();
  }
  if (pending_.empty()) oldest_pending_time_ = packet.arrival_time;
  pending_.push_back(packet);
  // A timeout flush leaves only the new packet pending, so a full batch and
  // a timeout batch cannot both be produced by one push.
  if (pending_.size() >= policy_.threshold_n) return take_batch();
  return timed_out;
}

std::optional<Batch> BatchGate::flush() {
  if (pending_.empty()) return std::nullopt;
  std::uint32_t dummies = 0;
  double last_time = pending_.back().arrival_time;
  while (pending_.size() < policy_.threshold_n) {
    PacketGroundTruth dummy;
    dummy.packet_uid = 0xd000000000000000ull | next_dummy_uid_++;
    dummy.page_id = kDummyPageId;
    dummy.kind = PacketKind::Request;
    dummy.payload_bytes = 1;  // padded up by the active padding policy
    dummy.dummy = true;
    dummy.arrival_time = last_time;
    pending_.push_back(std::move(dummy));
    ++dummies;
  }
  Batch batch = take_batch();
  batch.dummy_count = dummies;
  return batch;
}

BatchVerifier::BatchVerifier(std::uint32_t threshold_n) : threshold_n_(threshold_n) {}

bool BatchVerifier::verify(const Batch& batch) {
  if (batch.packets.size() != threshold_n_) return false;
  if (batch.batch_seq != expected_seq_) return false;  // replay or gap
  ++expected_seq_;
  return true;
}

void BatchVerifier::reset() { expected_seq_ = 0; }

}  // namespace isclab
