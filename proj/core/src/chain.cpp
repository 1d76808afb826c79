#include "isclab/chain.hpp"

#include <algorithm>
#include <cmath>

#include "isclab/errors.hpp"

namespace isclab {

const char* vnf_role_name(VnfRole role) {
  switch (role) {
    case VnfRole::Nat: return "nat";
    case VnfRole::Waf: return "waf";
    case VnfRole::Ids: return "ids";
    case VnfRole::WanOpt: return "wanopt";
  }
  return "?";
}

VnfRole vnf_role_from_name(const std::string& name) {
  if (name == "nat") return VnfRole::Nat;
  if (name == "waf") return VnfRole::Waf;
  if (name == "ids") return VnfRole::Ids;
  if (name == "wanopt") return VnfRole::WanOpt;
  throw ConfigError("unknown VNF role '" + name + "'");
}

void ChainTopology::validate() const {
  int role_count[4] = {0, 0, 0, 0};
  std::vector<std::uint32_t> ids;
  for (const VnfInstance& v : vnfs) {
    ++role_count[static_cast<int>(v.role)];
    ids.push_back(v.enclave_id);
  }
  for (int c : role_count)
    if (c != 1) throw ConfigError("each VNF role must appear exactly once");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ConfigError("enclave ids must be unique");
  if (request_path.empty() || response_path.empty())
    throw ConfigError("chain paths must be non-empty");
}

std::uint32_t ChainTopology::enclave_of(VnfRole role) const {
  for (const VnfInstance& v : vnfs)
    if (v.role == role) return v.enclave_id;
  throw ConfigError("role not present in topology");
}

std::uint64_t ChainTopology::tag() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ull;
  };
  for (const VnfInstance& v : vnfs) {
    mix(v.enclave_id);
    mix(static_cast<std::uint64_t>(v.role) + 17);
  }
  mix(0x5eu);
  for (VnfRole r : request_path) mix(static_cast<std::uint64_t>(r) + 3);
  mix(0x5fu);
  for (VnfRole r : response_path) mix(static_cast<std::uint64_t>(r) + 3);
  return h;
}

void RuleSet::validate() const {
  if (waf_rules.empty()) throw ConfigError("WAF needs at least one rule");
  if (ids_rules.empty()) throw ConfigError("IDS needs at least one rule");
  if (nat_table.empty()) throw ConfigError("NAT table must be non-empty");
  bool have_default = false;
  for (const NatEntry& e : nat_table) {
    if (e.prefix_len > 32) throw ConfigError("NAT prefix length exceeds 32");
    if (e.prefix_len < 32 && (e.prefix & ((1u << (32 - e.prefix_len)) - 1)) != 0)
      throw ConfigError("NAT prefix has bits below its mask");
    if (e.prefix_len == 0) have_default = true;
  }
  if (!have_default) throw ConfigError("NAT table must contain a 0/0 default route");
}

RuleSet generate_ruleset(std::uint64_t seed, std::size_t waf_rules, std::size_t ids_rules,
                         std::size_t nat_entries) {
  SplitMix64 rng(derive_seed(seed, "ruleset"));
  RuleSet rules;
  auto make_pattern = [&rng] {
    static const char alphabet[] = "0123456789abcdef=<>%&'();/";
    std::string p;
    const std::size_t len = 8 + rng.below(9);
    for (std::size_t i = 0; i < len; ++i)
      p.push_back(alphabet[rng.below(sizeof(alphabet) - 1)]);
    return p;
  };
  rules.waf_rules.reserve(waf_rules);
  for (std::size_t i = 0; i < waf_rules; ++i) rules.waf_rules.push_back(make_pattern());
  rules.ids_rules.reserve(ids_rules);
  for (std::size_t i = 0; i < ids_rules; ++i) rules.ids_rules.push_back(make_pattern());

  rules.nat_table.push_back(NatEntry{0, 0, 0});  // default route
  for (std::size_t i = 1; i < nat_entries; ++i) {
    NatEntry e;
    e.prefix_len = static_cast<std::uint8_t>(rng.range(8, 28));
    const std::uint32_t mask = ~std::uint32_t{0} << (32 - e.prefix_len);
    e.prefix = static_cast<std::uint32_t>(rng.next()) & mask;
    e.translation = static_cast<std::uint32_t>(rng.next());
    rules.nat_table.push_back(e);
  }
  return rules;
}

void DelayModel::validate() const {
  // All coefficients are unsigned, so non-negativity holds by construction.
}

std::uint64_t DelayModel::base_for(VnfRole role) const {
  switch (role) {
    case VnfRole::Nat: return nat_base;
    case VnfRole::Waf: return waf_base;
    case VnfRole::Ids: return ids_base;
    case VnfRole::WanOpt: return wanopt_base;
  }
  return 0;
}

void ChainConfig::validate() const {
  topology.validate();
  rules.validate();
  delay.validate();
  if (log_record_bytes < 1) throw ConfigError("log record size must be positive");
}

double compression_ratio_for(std::uint32_t page_id, std::uint32_t object_id, ContentClass cls) {
  const double u = hash_unit(page_id, object_id, "cprs");
  // Text draws from [0.31, 0.60) so the observed post-rounding ratio stays
  // above 0.30 even for 101-byte payloads; images draw from [0, 0.05).
  return cls == ContentClass::Text ? 0.31 + 0.29 * u : 0.05 * u;
}

std::uint64_t wanopt_output_bytes(const PacketGroundTruth& packet) {
  const double r =
      compression_ratio_for(packet.page_id, packet.object_id, packet.content_class);
  const double out = std::ceil(static_cast<double>(packet.payload_bytes) * (1.0 - r));
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(out));
}

ServiceChain::ServiceChain(ChainConfig config, Collector* collector, std::uint64_t seed)
    : config_(std::move(config)),
      collector_(collector),
      rng_(derive_seed(seed, "chain")),
      batch_verifier_(1) {
  config_.validate();
  nat_trie_ = NatTrie(config_.rules.nat_table);

  for (const VnfInstance& v : config_.topology.vnfs) {
    OcallTable table;
    table.enclave_id = v.enclave_id;
    table.entries.resize(2);
    table.entries[kOcallDeliver] = [](std::uint64_t bytes) { return bytes; };
    table.entries[kOcallWrite] = [](std::uint64_t bytes) { return bytes; };
    tables_.push_back(collector_ ? collector_->hijack_ocall_table(table) : std::move(table));
    table_owner_.push_back(v.enclave_id);
  }
}

void ServiceChain::set_batch_threshold(std::uint32_t threshold_n) {
  batch_verifier_ = BatchVerifier(threshold_n);
}

void ServiceChain::reset(std::uint64_t seed) {
  clock_.reset();
  rng_ = SplitMix64(derive_seed(seed, "chain"));
  batch_verifier_.reset();
}

const OcallTable& ServiceChain::table_for(std::uint32_t enclave_id) const {
  for (std::size_t i = 0; i < table_owner_.size(); ++i)
    if (table_owner_[i] == enclave_id) return tables_[i];
  throw ContractError("no OCALL table for enclave");
}

template <class F>
auto ServiceChain::enter_enclave(std::uint32_t enclave_id, std::uint64_t param_bytes, F&& body)
    -> decltype(std::forward<F>(body)()) {
  if (collector_)
    return collector_->hook_ecall(enclave_id, kEcallProcess, param_bytes,
                                  std::forward<F>(body));
  return std::forward<F>(body)();
}

std::uint64_t ServiceChain::observable_len(std::uint64_t payload,
                                           const PaddingPolicy* padding) const {
  const std::uint64_t plain = padding ? pad_length(payload, *padding) : payload;
  return cipher_len(plain, config_.cipher_overhead);
}

std::uint64_t ServiceChain::pad_extra_cycles(std::uint64_t payload,
                                             const PaddingPolicy* padding) const {
  if (!padding) return 0;
  return config_.delay.pad_copy_per_byte * (pad_length(payload, *padding) - payload);
}

std::uint64_t ServiceChain::jittered(std::uint64_t delay) {
  if (config_.delay.noise_amplitude == 0) return delay;
  const std::int64_t d = static_cast<std::int64_t>(delay) +
                         rng_.jitter(config_.delay.noise_amplitude);
  return d < 0 ? 0 : static_cast<std::uint64_t>(d);
}

ServiceChain::StagePure ServiceChain::stage_compute(VnfRole role,
                                                    const PacketGroundTruth& packet,
                                                    std::uint64_t payload_in) const {
  const DelayModel& dm = config_.delay;
  StagePure out;
  out.payload_out = payload_in;
  switch (role) {
    case VnfRole::Nat: {
      const NatLookup lookup = nat_trie_.lookup(config_.nat_lookup_address);
      out.delay = dm.nat_base + dm.per_bit * lookup.bits_visited + dm.per_byte * payload_in;
      break;
    }
    case VnfRole::Waf: {
      const std::size_t total = config_.rules.waf_rules.size();
      const std::size_t checked =
          packet.suspicious
              ? 1 + derive_seed(packet.page_id, "waf-rule", packet.object_id) % total
              : total;  // no match: every rule scanned
      const std::uint64_t content = dm.content_scan_cycles == 0
                                        ? 0
                                        : derive_seed(packet.page_id, "waf-scan",
                                                      packet.object_id) %
                                              (dm.content_scan_cycles + 1);
      out.delay = dm.waf_base + dm.per_rule * checked + dm.per_byte * payload_in + content;
      out.route = packet.suspicious ? VnfRole::Ids : VnfRole::Nat;
      break;
    }
    case VnfRole::Ids: {
      const std::size_t total = config_.rules.ids_rules.size();
      const std::size_t checked =
          packet.loggable
              ? 1 + derive_seed(packet.page_id, "ids-rule", packet.object_id) % total
              : total;
      const std::uint64_t content = dm.content_scan_cycles == 0
                                        ? 0
                                        : derive_seed(packet.page_id, "ids-scan",
                                                      packet.object_id) %
                                              (dm.content_scan_cycles + 1);
      out.delay = dm.ids_base + dm.per_rule * checked + dm.per_byte * payload_in + content;
      out.logged = packet.loggable;
      if (out.logged) out.delay += dm.log_write;
      break;
    }
    case VnfRole::WanOpt: {
      PacketGroundTruth at_stage = packet;
      at_stage.payload_bytes = payload_in;
      out.payload_out = wanopt_output_bytes(at_stage);
      out.delay = dm.wanopt_base + dm.per_byte * payload_in;
      break;
    }
  }
  return out;
}

NatProcessResult ServiceChain::nat_process(const PacketGroundTruth& packet,
                                           const PaddingPolicy* padding) {
  if (packet.payload_bytes == 0) throw ContractError("payload must be positive");
  const StagePure pure = stage_compute(VnfRole::Nat, packet, packet.payload_bytes);
  const NatLookup lookup = nat_trie_.lookup(config_.nat_lookup_address);
  const std::uint64_t obs = observable_len(packet.payload_bytes, padding);
  const std::uint64_t actual =
      jittered(pure.delay + pad_extra_cycles(packet.payload_bytes, padding));
  const std::uint32_t enclave = config_.topology.enclave_of(VnfRole::Nat);
  return enter_enclave(enclave, obs, [&] {
    clock_.advance(actual);
    table_for(enclave).entries[kOcallDeliver](obs);
    return NatProcessResult{actual, lookup.translation};
  });
}

WafProcessResult ServiceChain::waf_process(const PacketGroundTruth& packet,
                                           const PaddingPolicy* padding) {
  if (packet.payload_bytes == 0) throw ContractError("payload must be positive");
  const StagePure pure = stage_compute(VnfRole::Waf, packet, packet.payload_bytes);
  const std::uint64_t obs = observable_len(packet.payload_bytes, padding);
  const std::uint64_t actual =
      jittered(pure.delay + pad_extra_cycles(packet.payload_bytes, padding));
  const std::uint32_t enclave = config_.topology.enclave_of(VnfRole::Waf);
  return enter_enclave(enclave, obs, [&] {
    clock_.advance(actual);
    table_for(enclave).entries[kOcallDeliver](obs);
    return WafProcessResult{actual, pure.route};
  });
}

IdsProcessResult ServiceChain::ids_process(const PacketGroundTruth& packet,
                                           const PaddingPolicy* padding) {
  if (packet.payload_bytes == 0) throw ContractError("payload must be positive");
  const StagePure pure = stage_compute(VnfRole::Ids, packet, packet.payload_bytes);
  const std::uint64_t obs = observable_len(packet.payload_bytes, padding);
  const std::uint64_t actual =
      jittered(pure.delay + pad_extra_cycles(packet.payload_bytes, padding));
  const std::uint32_t enclave = config_.topology.enclave_of(VnfRole::Ids);
  return enter_enclave(enclave, obs, [&] {
    clock_.advance(actual);
    if (pure.logged)
      table_for(enclave).entries[kOcallWrite](
          observable_len(config_.log_record_bytes, padding));
    table_for(enclave).entries[kOcallDeliver](obs);
    return IdsProcessResult{actual, pure.logged};
  });
}

WanoptProcessResult ServiceChain::wanopt_process(const PacketGroundTruth& packet,
                                                 const PaddingPolicy* padding) {
  if (packet.payload_bytes == 0) throw ContractError("payload must be positive");
  const StagePure pure = stage_compute(VnfRole::WanOpt, packet, packet.payload_bytes);
  const std::uint64_t obs_in = observable_len(packet.payload_bytes, padding);
  const std::uint64_t obs_out = observable_len(pure.payload_out, padding);
  const std::uint64_t actual =
      jittered(pure.delay + pad_extra_cycles(packet.payload_bytes, padding));
  const std::uint32_t enclave = config_.topology.enclave_of(VnfRole::WanOpt);
  return enter_enclave(enclave, obs_in, [&] {
    clock_.advance(actual);
    table_for(enclave).entries[kOcallDeliver](obs_out);
    return WanoptProcessResult{actual, pure.payload_out};
  });
}

PacketFeatureVector ServiceChain::process_packet(const PacketGroundTruth& packet,
                                                 const PaddingPolicy* padding) {
  PacketFeatureVector fv;
  fv.topology_tag = topology_tag();
  clock_.advance(config_.delay.inter_packet_gap);

  const std::vector<VnfRole>& path = packet.kind == PacketKind::Request
                                         ? config_.topology.request_path
                                         : config_.topology.response_path;
  for (VnfRole role : path) {
    if (role == VnfRole::Ids && !packet.suspicious) continue;
    VnfObservation obs;
    obs.enclave_id = config_.topology.enclave_of(role);
    obs.param_bytes_in = observable_len(packet.payload_bytes, padding);
    obs.param_bytes_out = obs.param_bytes_in;
    obs.ocall_indices = {kOcallDeliver};
    switch (role) {
      case VnfRole::Nat:
        obs.delay_cycles = nat_process(packet, padding).delay_cycles;
        break;
      case VnfRole::Waf:
        obs.delay_cycles = waf_process(packet, padding).delay_cycles;
        break;
      case VnfRole::Ids: {
        const IdsProcessResult r = ids_process(packet, padding);
        obs.delay_cycles = r.delay_cycles;
        if (r.logged) obs.ocall_indices = {kOcallWrite, kOcallDeliver};
        break;
      }
      case VnfRole::WanOpt: {
        const WanoptProcessResult r = wanopt_process(packet, padding);
        obs.delay_cycles = r.delay_cycles;
        obs.param_bytes_out = observable_len(r.new_payload_bytes, padding);
        break;
      }
    }
    fv.vnfs.push_back(std::move(obs));
  }
  return fv;
}

BatchOutput ServiceChain::process_batch(const Batch& batch, const PaddingPolicy* padding) {
  BatchOutput out;
  clock_.advance(config_.delay.inter_packet_gap);

  const std::uint32_t ingress = config_.topology.vnfs.front().enclave_id;
  std::uint64_t total_in = 0;
  for (const PacketGroundTruth& p : batch.packets)
    total_in += observable_len(p.payload_bytes, padding);

  if (!batch_verifier_.verify(batch)) {
    // The enclave refuses to execute; the host sees the delivery bounce.
    enter_enclave(ingress, total_in, [&] {
      clock_.advance(jittered(config_.delay.batch_verify));
      table_for(ingress).entries[kOcallDeliver](0);
      return 0;
    });
    return out;
  }
  out.accepted = true;

  // Ground-truth features: the per-packet decisions are exactly those of
  // the undefended chain (noise-free, no events).
  const std::uint64_t tag = topology_tag();
  for (const PacketGroundTruth& p : batch.packets) {
    PacketFeatureVector fv;
    fv.topology_tag = tag;
    const std::vector<VnfRole>& path = p.kind == PacketKind::Request
                                           ? config_.topology.request_path
                                           : config_.topology.response_path;
    for (VnfRole role : path) {
      if (role == VnfRole::Ids && !p.suspicious) continue;
      const StagePure pure = stage_compute(role, p, p.payload_bytes);
      VnfObservation obs;
      obs.enclave_id = config_.topology.enclave_of(role);
      obs.param_bytes_in = observable_len(p.payload_bytes, padding);
      obs.param_bytes_out = observable_len(pure.payload_out, padding);
      obs.delay_cycles = pure.delay;
      obs.ocall_indices =
          pure.logged ? std::vector<std::uint32_t>{kOcallWrite, kOcallDeliver}
                      : std::vector<std::uint32_t>{kOcallDeliver};
      fv.vnfs.push_back(std::move(obs));
    }
    out.features.push_back(std::move(fv));
  }

  // Batch traversal: every enclave receives the whole batch, verifies it,
  // processes its relevant packets and hands the whole batch on. Observable
  // events exist only at batch granularity.
  std::vector<std::uint64_t> payloads;
  payloads.reserve(batch.packets.size());
  for (const PacketGroundTruth& p : batch.packets) payloads.push_back(p.payload_bytes);

  auto relevant = [this](const PacketGroundTruth& p, VnfRole role) {
    const std::vector<VnfRole>& path = p.kind == PacketKind::Request
                                           ? config_.topology.request_path
                                           : config_.topology.response_path;
    if (std::find(path.begin(), path.end(), role) == path.end()) return false;
    return role != VnfRole::Ids || p.suspicious;
  };

  for (const VnfInstance& stage : config_.topology.vnfs) {
    std::uint64_t in_bytes = 0;
    std::uint64_t out_bytes = 0;
    std::uint64_t stage_delay = config_.delay.batch_verify;
    bool any_logged = false;

    std::vector<std::uint64_t> next_payloads = payloads;
    for (std::size_t i = 0; i < batch.packets.size(); ++i) {
      const PacketGroundTruth& p = batch.packets[i];
      in_bytes += observable_len(payloads[i], padding);
      std::uint64_t out_payload = payloads[i];
      if (relevant(p, stage.role)) {
        PacketGroundTruth at_stage = p;
        at_stage.payload_bytes = payloads[i];
        const StagePure pure = stage_compute(stage.role, at_stage, payloads[i]);
        stage_delay += pure.delay + pad_extra_cycles(payloads[i], padding);
        any_logged = any_logged || pure.logged;
        out_payload = pure.payload_out;
      }
      out_bytes += observable_len(out_payload, padding);
      next_payloads[i] = out_payload;
    }
    payloads = std::move(next_payloads);

    const std::uint64_t actual = jittered(stage_delay);
    const std::uint32_t enclave = stage.enclave_id;
    enter_enclave(enclave, in_bytes, [&] {
      clock_.advance(actual);
      if (stage.role == VnfRole::Ids && any_logged)
        table_for(enclave).entries[kOcallWrite](
            observable_len(config_.log_record_bytes, padding));
      table_for(enclave).entries[kOcallDeliver](out_bytes);
      return 0;
    });
  }

  // Release all outputs together in a fresh random order, so position can
  // never pair an input ciphertext with an output ciphertext.
  out.released = batch.packets;
  rng_.shuffle(out.released);
  return out;
}

}  // namespace isclab
