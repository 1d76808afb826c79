#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <vector>

namespace isclab {

// What the observer saw while one VNF handled one packet.
struct VnfObservation {
  std::uint32_t enclave_id = 0;
  std::uint64_t param_bytes_in = 0;   // ECALL parameter size
  std::uint64_t param_bytes_out = 0;  // delivery OCALL parameter size
  std::uint64_t delay_cycles = 0;     // ECALL -> delivery OCALL
  std::vector<std::uint32_t> ocall_indices;  // OCALL-table indices, in order

  friend bool operator==(const VnfObservation&, const VnfObservation&) = default;
};

// Everything about a packet observation except the delays. Two packets with
// equal discrete keys are indistinguishable to the observer up to timing.
struct DiscreteKey {
  std::vector<std::uint32_t> path;                       // enclave ids traversed
  std::vector<std::uint64_t> bytes_in;                   // per VNF
  std::vector<std::uint64_t> bytes_out;                  // per VNF
  std::vector<std::vector<std::uint32_t>> ocall_indices; // per VNF

  auto operator<=>(const DiscreteKey&) const = default;
};

// The per-packet vector of interface side-channel features across the chain.
struct PacketFeatureVector {
  std::vector<VnfObservation> vnfs;  // request-path order, then response-path order
  std::uint64_t topology_tag = 0;

  std::vector<std::uint32_t> chain_path() const;
  DiscreteKey discrete() const;
  // Byte pair at the WAN optimizer, when traversed: (param in, param out).
  std::optional<std::pair<std::uint64_t, std::uint64_t>> wanopt_bytes(
      std::uint32_t wanopt_enclave_id) const;
  // (out - in) / in at the WAN optimizer; negative for compression.
  std::optional<double> size_change_ratio(std::uint32_t wanopt_enclave_id) const;
};

struct DelayRange {
  std::uint64_t min_cycles = 0;
  std::uint64_t max_cycles = 0;

  bool contains(std::uint64_t d) const { return d >= min_cycles && d <= max_cycles; }
  friend bool operator==(const DelayRange&, const DelayRange&) = default;
};

// One constant packet of a page profile: the discrete key plus the closed
// per-VNF delay interval observed over the training visits.
struct ProfiledPacket {
  DiscreteKey key;
  std::vector<DelayRange> delay_ranges;  // aligned with key.path
  std::uint32_t per_visit_count = 1;
  std::uint64_t topology_tag = 0;
};

// True iff every discrete feature equals the profiled value and every
// per-VNF delay falls inside the profiled [min, max] range, boundaries
// included. Throws ContractError when the two sides were built against
// different chain topologies.
bool features_match(const PacketFeatureVector& candidate, const ProfiledPacket& profiled);

}  // namespace isclab
