#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "isclab/cipher.hpp"
#include "isclab/collector.hpp"
#include "isclab/countermeasures.hpp"
#include "isclab/features.hpp"
#include "isclab/nat_trie.hpp"
#include "isclab/packets.hpp"
#include "isclab/rng.hpp"

namespace isclab {

enum class VnfRole : std::uint8_t { Nat, Waf, Ids, WanOpt };

const char* vnf_role_name(VnfRole role);
VnfRole vnf_role_from_name(const std::string& name);  // ConfigError if unknown

struct VnfInstance {
  std::uint32_t enclave_id = 0;
  VnfRole role = VnfRole::Nat;
};

// The simulated service function chain. Requests flow toward the internet
// through NAT, WAF and the WAN optimizer; responses come back through the
// WAF, visit the IDS when flagged suspicious, and leave via the NAT.
struct ChainTopology {
  std::vector<VnfInstance> vnfs{{1, VnfRole::Nat},
                                {2, VnfRole::Waf},
                                {3, VnfRole::Ids},
                                {4, VnfRole::WanOpt}};
  std::vector<VnfRole> request_path{VnfRole::Nat, VnfRole::Waf, VnfRole::WanOpt};
  // Ids in this list is traversed only by suspicious packets.
  std::vector<VnfRole> response_path{VnfRole::Waf, VnfRole::Ids, VnfRole::Nat};

  void validate() const;  // every role exactly once, paths reference vnfs
  std::uint32_t enclave_of(VnfRole role) const;
  std::uint64_t tag() const;  // stable identity hash for features_match
};

struct RuleSet {
  std::vector<std::string> waf_rules;
  std::vector<std::string> ids_rules;
  std::vector<NatEntry> nat_table;  // must contain a 0/0 default route

  void validate() const;
};

// Detection rule sets and a NAT table with seeded contents. Only the rule
// counts matter to the simulation; the byte patterns are corpus dressing.
RuleSet generate_ruleset(std::uint64_t seed, std::size_t waf_rules = 1000,
                         std::size_t ids_rules = 3000, std::size_t nat_entries = 256);

// Cycle-cost model of the per-packet enclave computations.
struct DelayModel {
  std::uint64_t nat_base = 500;
  std::uint64_t waf_base = 800;
  std::uint64_t ids_base = 1200;
  std::uint64_t wanopt_base = 1500;
  std::uint64_t per_rule = 20;       // per rule checked (WAF/IDS scan)
  std::uint64_t per_byte = 2;        // per plaintext byte handled
  std::uint64_t per_bit = 25;        // per NAT trie edge walked
  // Pattern matching cost depends on the bytes being scanned, not just
  // their count; upper bound of that content-dependent part (WAF/IDS).
  std::uint64_t content_scan_cycles = 1500;
  std::uint64_t log_write = 400;     // IDS log write
  std::uint64_t batch_verify = 300;  // in-enclave batch verification
  std::uint64_t pad_copy_per_byte = 1;  // copying padding bytes
  std::uint64_t inter_packet_gap = 200; // gateway handling between packets
  std::uint64_t noise_amplitude = 0;    // uniform processing jitter half-width

  void validate() const;
  std::uint64_t base_for(VnfRole role) const;
};

struct ChainConfig {
  ChainTopology topology;
  RuleSet rules;
  DelayModel delay;
  std::uint64_t cipher_overhead = kDefaultCipherOverhead;
  // All simulated traffic belongs to one gateway<->cloud flow, so the NAT
  // looks up a single configured address; its trie depth is a platform
  // constant, keeping delay a function of packet size alone.
  std::uint32_t nat_lookup_address = 0x0a00002au;
  std::uint64_t log_record_bytes = 128;

  void validate() const;
};

// Deterministic per-object compression ratio. Text compresses by at least
// 30 percent, images by at most 5, so the ratio classes never overlap.
double compression_ratio_for(std::uint32_t page_id, std::uint32_t object_id, ContentClass cls);

// Compressed payload size at the WAN optimizer.
std::uint64_t wanopt_output_bytes(const PacketGroundTruth& packet);

struct NatProcessResult {
  std::uint64_t delay_cycles = 0;
  std::uint32_t translation = 0;
};

struct WafProcessResult {
  std::uint64_t delay_cycles = 0;
  VnfRole route = VnfRole::Nat;  // Ids for suspicious packets
};

struct IdsProcessResult {
  std::uint64_t delay_cycles = 0;
  bool logged = false;
};

struct WanoptProcessResult {
  std::uint64_t delay_cycles = 0;
  std::uint64_t new_payload_bytes = 0;
};

struct BatchOutput {
  bool accepted = false;
  // Ground-truth features per input packet, in input order.
  std::vector<PacketFeatureVector> features;
  // Packets released by the gateway, in randomized within-batch order.
  std::vector<PacketGroundTruth> released;
};

// One chain instance processes one packet (or one verified batch) at a
// time. Collector hooks run synchronously on the processing thread; pass a
// null collector to run silent.
class ServiceChain {
 public:
  ServiceChain(ChainConfig config, Collector* collector, std::uint64_t seed);

  // Drives one packet along its path, emitting ECALL/OCALL events through
  // the collector. An active padding policy fixes every observable
  // parameter size before encryption.
  PacketFeatureVector process_packet(const PacketGroundTruth& packet,
                                     const PaddingPolicy* padding = nullptr);

  // Batch operation: the full batch is delivered to every VNF in topology
  // order and verified in-enclave before any processing happens. Only
  // batch-level events are observable. A rejected batch is dropped after a
  // zero-length delivery event.
  BatchOutput process_batch(const Batch& batch, const PaddingPolicy* padding = nullptr);

  // Per-VNF operations (public so their contracts can be tested directly).
  NatProcessResult nat_process(const PacketGroundTruth& packet,
                               const PaddingPolicy* padding = nullptr);
  WafProcessResult waf_process(const PacketGroundTruth& packet,
                               const PaddingPolicy* padding = nullptr);
  IdsProcessResult ids_process(const PacketGroundTruth& packet,
                               const PaddingPolicy* padding = nullptr);
  WanoptProcessResult wanopt_process(const PacketGroundTruth& packet,
                                     const PaddingPolicy* padding = nullptr);

  // The enclave-side batch verifier only accepts batches of exactly this
  // size; reconfiguring resets its expected sequence tag.
  void set_batch_threshold(std::uint32_t threshold_n);

  void reset(std::uint64_t seed);  // clock to zero, jitter and shuffle reseeded
  const VirtualClock& clock() const { return clock_; }
  const ChainConfig& config() const { return config_; }
  std::uint64_t topology_tag() const { return config_.topology.tag(); }

 private:
  struct StagePure {
    std::uint64_t delay = 0;           // before jitter
    std::uint64_t payload_out = 0;     // plaintext leaving the stage
    bool logged = false;
    VnfRole route = VnfRole::Nat;
  };

  StagePure stage_compute(VnfRole role, const PacketGroundTruth& packet,
                          std::uint64_t payload_in) const;
  std::uint64_t observable_len(std::uint64_t payload, const PaddingPolicy* padding) const;
  std::uint64_t jittered(std::uint64_t delay);
  std::uint64_t pad_extra_cycles(std::uint64_t payload, const PaddingPolicy* padding) const;
  const OcallTable& table_for(std::uint32_t enclave_id) const;

  template <class F>
  auto enter_enclave(std::uint32_t enclave_id, std::uint64_t param_bytes, F&& body)
      -> decltype(std::forward<F>(body)());

  ChainConfig config_;
  Collector* collector_;
  SplitMix64 rng_;
  VirtualClock clock_;
  NatTrie nat_trie_;
  BatchVerifier batch_verifier_;
  std::vector<OcallTable> tables_;          // per vnf, hooked when collecting
  std::vector<std::uint32_t> table_owner_;  // enclave id per table
};

// OCALL-table slots shared by all simulated enclaves.
inline constexpr std::uint32_t kOcallDeliver = 0;
inline constexpr std::uint32_t kOcallWrite = 1;
// Every enclave exposes a single packet-processing ECALL.
inline constexpr std::uint32_t kEcallProcess = 0;

}  // namespace isclab
