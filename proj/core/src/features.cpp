#include "isclab/features.hpp"

#include "isclab/errors.hpp"

namespace isclab {

std::vector<std::uint32_t> PacketFeatureVector::chain_path() const {
  std::vector<std::uint32_t> path;
  path.reserve(vnfs.size());
  for (const VnfObservation& v : vnfs) path.push_back(v.enclave_id);
  return path;
}

DiscreteKey PacketFeatureVector::discrete() const {
  DiscreteKey key;
  key.path.reserve(vnfs.size());
  key.bytes_in.reserve(vnfs.size());
  key.bytes_out.reserve(vnfs.size());
  key.ocall_indices.reserve(vnfs.size());
  for (const VnfObservation& v : vnfs) {
    key.path.push_back(v.enclave_id);
    key.bytes_in.push_back(v.param_bytes_in);
    key.bytes_out.push_back(v.param_bytes_out);
    key.ocall_indices.push_back(v.ocall_indices);
  }
  return key;
}

std::optional<std::pair<std::uint64_t, std::uint64_t>> PacketFeatureVector::wanopt_bytes(
    std::uint32_t wanopt_enclave_id) const {
  for (const VnfObservation& v : vnfs)
    if (v.enclave_id == wanopt_enclave_id)
      return std::make_pair(v.param_bytes_in, v.param_bytes_out);
  return std::nullopt;
}

std::optional<double> PacketFeatureVector::size_change_ratio(
    std::uint32_t wanopt_enclave_id) const {
  auto bytes = wanopt_bytes(wanopt_enclave_id);
  if (!bytes || bytes->first == 0) return std::nullopt;
  return (static_cast<double>(bytes->second) - static_cast<double>(bytes->first)) /
         static_cast<double>(bytes->first);
}

bool features_match(const PacketFeatureVector& candidate, const ProfiledPacket& profiled) {
  if (candidate.topology_tag != profiled.topology_tag)
    throw ContractError("features_match across different chain topologies");
  if (candidate.vnfs.size() != profiled.key.path.size()) return false;
  for (std::size_t i = 0; i < candidate.vnfs.size(); ++i) {
    const VnfObservation& v = candidate.vnfs[i];
    if (v.enclave_id != profiled.key.path[i]) return false;
    if (v.param_bytes_in != profiled.key.bytes_in[i]) return false;
    if (v.param_bytes_out != profiled.key.bytes_out[i]) return false;
    if (v.ocall_indices != profiled.key.ocall_indices[i]) return false;
    if (!profiled.delay_ranges[i].contains(v.delay_cycles)) return false;
  }
  return true;
}

}  // namespace isclab
