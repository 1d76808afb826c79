#include "isclab/profile.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "isclab/errors.hpp"
#include "isclab/rng.hpp"

namespace isclab {

namespace {

using nlohmann::json;

// A maximal E(x) O(x)* run: one enclave handling one unit of delivered data.
struct EnclaveGroup {
  VnfObservation obs;
};

std::vector<EnclaveGroup> group_events(std::span<const InterfaceEvent> events) {
  std::vector<EnclaveGroup> groups;
  std::size_t i = 0;
  while (i < events.size()) {
    if (events[i].direction != Direction::Ecall) {
      ++i;  // stray OCALL, unattributable
      continue;
    }
    EnclaveGroup g;
    g.obs.enclave_id = events[i].enclave_id;
    g.obs.param_bytes_in = events[i].param_bytes;
    g.obs.param_bytes_out = events[i].param_bytes;
    const InterfaceEvent& ecall = events[i];
    ++i;
    const InterfaceEvent* last_deliver = nullptr;
    const InterfaceEvent* last_ocall = nullptr;
    while (i < events.size() && events[i].direction == Direction::Ocall) {
      g.obs.ocall_indices.push_back(events[i].call_id);
      last_ocall = &events[i];
      if (events[i].call_id == kOcallDeliver) last_deliver = &events[i];
      ++i;
    }
    const InterfaceEvent* done = last_deliver ? last_deliver : last_ocall;
    if (done) {
      g.obs.param_bytes_out = done->param_bytes;
      g.obs.delay_cycles = delay_of(ecall, *done);
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

// Number of groups consumed when `path` (with the IDS leg optional) matches
// at `start`; 0 when it does not match.
std::size_t match_path(const std::vector<EnclaveGroup>& groups, std::size_t start,
                       const ChainTopology& topology, const std::vector<VnfRole>& path) {
  std::size_t i = start;
  for (VnfRole role : path) {
    const std::uint32_t enclave = topology.enclave_of(role);
    if (i < groups.size() && groups[i].obs.enclave_id == enclave) {
      ++i;
      continue;
    }
    if (role == VnfRole::Ids) continue;  // benign packets skip the IDS
    return 0;
  }
  return i - start;
}

std::size_t match_any_path(const std::vector<EnclaveGroup>& groups, std::size_t start,
                           const ChainTopology& topology) {
  if (std::size_t n = match_path(groups, start, topology, topology.request_path)) return n;
  return match_path(groups, start, topology, topology.response_path);
}

}  // namespace

std::vector<PacketFeatureVector> extract_packet_features(std::span<const InterfaceEvent> events,
                                                         const ChainTopology& topology) {
  const std::vector<EnclaveGroup> groups = group_events(events);
  const std::uint64_t tag = topology.tag();

  std::vector<PacketFeatureVector> out;
  std::size_t i = 0;
  while (i < groups.size()) {
    std::size_t consumed = match_any_path(groups, i, topology);
    if (consumed == 0) {
      // Not a single-packet traversal (batch-level trace, unknown shape).
      // Swallow groups until something parseable starts; the leftover
      // pseudo-packet keeps its observed path and will match no profile.
      std::size_t j = i + 1;
      while (j < groups.size() && match_any_path(groups, j, topology) == 0) ++j;
      consumed = j - i;
    }
    PacketFeatureVector fv;
    fv.topology_tag = tag;
    for (std::size_t k = i; k < i + consumed; ++k) fv.vnfs.push_back(groups[k].obs);
    out.push_back(std::move(fv));
    i += consumed;
  }
  return out;
}

std::vector<VisitObservation> collect_visits(const WebPageSpec& page, const CorpusParams& params,
                                             ServiceChain& chain, Collector& collector,
                                             std::uint32_t n_visits, std::uint64_t seed) {
  if (n_visits < 2) throw ContractError("profiling needs at least 2 visits");

  std::vector<VisitObservation> visits;
  visits.reserve(n_visits);
  for (std::uint32_t v = 0; v < n_visits; ++v) {
    const std::vector<PacketGroundTruth> packets =
        render_visit(page, derive_seed(seed, "profile-visit", page.page_id, v), 0.0, params);

    chain.reset(derive_seed(seed, "profile-chain", page.page_id, v));
    collector.reseed(derive_seed(seed, "profile-noise", page.page_id, v));
    collector.begin_trace();
    for (const PacketGroundTruth& p : packets) chain.process_packet(p);
    const Trace trace = collector.finalize();

    std::vector<PacketFeatureVector> fvs =
        extract_packet_features(trace, chain.config().topology);
    if (fvs.size() != packets.size())
      throw ValidationError("profiling trace did not split into one block per packet");

    VisitObservation vo;
    vo.reserve(packets.size());
    for (std::size_t k = 0; k < packets.size(); ++k)
      vo.push_back(TimedFeature{std::move(fvs[k]), packets[k].arrival_time,
                                packets[k].packet_uid});
    visits.push_back(std::move(vo));
  }
  return visits;
}

ConstantExtraction extract_constant_packets(std::span<const VisitObservation> visits) {
  if (visits.size() < 2) throw ContractError("constancy needs at least 2 visits");

  struct Acc {
    std::vector<std::uint32_t> per_visit;
    std::vector<DelayRange> ranges;
    std::uint64_t topology_tag = 0;
    std::size_t first_index = std::numeric_limits<std::size_t>::max();
  };
  std::map<DiscreteKey, Acc> by_key;

  for (std::size_t v = 0; v < visits.size(); ++v) {
    for (std::size_t k = 0; k < visits[v].size(); ++k) {
      const PacketFeatureVector& fv = visits[v][k].fv;
      DiscreteKey key = fv.discrete();
      Acc& acc = by_key[key];
      if (acc.per_visit.empty()) {
        acc.per_visit.assign(visits.size(), 0);
        acc.ranges.reserve(fv.vnfs.size());
        for (const VnfObservation& o : fv.vnfs)
          acc.ranges.push_back(DelayRange{o.delay_cycles, o.delay_cycles});
        acc.topology_tag = fv.topology_tag;
      } else {
        for (std::size_t s = 0; s < fv.vnfs.size(); ++s) {
          acc.ranges[s].min_cycles = std::min(acc.ranges[s].min_cycles, fv.vnfs[s].delay_cycles);
          acc.ranges[s].max_cycles = std::max(acc.ranges[s].max_cycles, fv.vnfs[s].delay_cycles);
        }
      }
      ++acc.per_visit[v];
      if (v == 0) acc.first_index = std::min(acc.first_index, k);
    }
  }

  // Order: first appearance within the first training visit.
  std::vector<std::pair<const DiscreteKey*, const Acc*>> retained;
  for (const auto& [key, acc] : by_key) {
    if (std::all_of(acc.per_visit.begin(), acc.per_visit.end(),
                    [](std::uint32_t c) { return c >= 1; }))
      retained.emplace_back(&key, &acc);
  }
  std::sort(retained.begin(), retained.end(),
            [](const auto& a, const auto& b) { return a.second->first_index < b.second->first_index; });

  ConstantExtraction result;
  for (std::size_t idx = 0; idx < retained.size(); ++idx) {
    const Acc& acc = *retained[idx].second;
    const auto [mn, mx] = std::minmax_element(acc.per_visit.begin(), acc.per_visit.end());
    if (*mn != *mx)
      result.warnings.push_back("packet " + std::to_string(idx) +
                                ": per-visit count varies between " + std::to_string(*mn) +
                                " and " + std::to_string(*mx) + ", keeping the minimum");
    ProfiledPacket pp;
    pp.key = *retained[idx].first;
    pp.delay_ranges = acc.ranges;
    pp.per_visit_count = *mn;
    pp.topology_tag = acc.topology_tag;
    result.packets.push_back(std::move(pp));
  }
  return result;
}

PageProfile build_profile(std::uint32_t page_id, std::span<const VisitObservation> visits) {
  ConstantExtraction extraction = extract_constant_packets(visits);
  if (extraction.packets.empty())
    throw ValidationError("page " + std::to_string(page_id) +
                          " is untrackable: no constant packets survived profiling");

  PageProfile profile;
  profile.page_id = page_id;
  profile.topology_tag = extraction.packets.front().topology_tag;
  profile.packets = std::move(extraction.packets);
  for (const ProfiledPacket& p : profile.packets) profile.total_per_visit += p.per_visit_count;

  std::map<DiscreteKey, std::uint32_t> slot_of;
  for (std::uint32_t i = 0; i < profile.packets.size(); ++i)
    slot_of.emplace(profile.packets[i].key, i);

  double t = 0.0;
  for (const VisitObservation& visit : visits) {
    std::vector<std::uint32_t> sequence;
    double first = 0.0, last = 0.0;
    bool any = false;
    for (const TimedFeature& tf : visit) {
      auto it = slot_of.find(tf.fv.discrete());
      if (it == slot_of.end()) continue;
      sequence.push_back(it->second);
      if (!any) first = tf.arrival_time;
      last = tf.arrival_time;
      any = true;
    }
    if (any) t = std::max(t, last - first);
    profile.exemplar_sequences.push_back(std::move(sequence));
  }
  // All packets in one instant would make the interval test filter
  // everything; keep a small floor.
  profile.interval_threshold_t = t > 0.0 ? t : 0.05;
  return profile;
}

namespace {

json profiled_packet_to_json(const ProfiledPacket& p) {
  json ranges = json::array();
  for (const DelayRange& r : p.delay_ranges)
    ranges.push_back(json::array({r.min_cycles, r.max_cycles}));
  return json{{"path", p.key.path},
              {"bytes_in", p.key.bytes_in},
              {"bytes_out", p.key.bytes_out},
              {"ocall_indices", p.key.ocall_indices},
              {"delay_ranges", std::move(ranges)},
              {"per_visit_count", p.per_visit_count}};
}

ProfiledPacket profiled_packet_from_json(const json& j, std::uint64_t topology_tag) {
  ProfiledPacket p;
  p.key.path = j.at("path").get<std::vector<std::uint32_t>>();
  p.key.bytes_in = j.at("bytes_in").get<std::vector<std::uint64_t>>();
  p.key.bytes_out = j.at("bytes_out").get<std::vector<std::uint64_t>>();
  p.key.ocall_indices = j.at("ocall_indices").get<std::vector<std::vector<std::uint32_t>>>();
  for (const json& r : j.at("delay_ranges"))
    p.delay_ranges.push_back(DelayRange{r.at(0).get<std::uint64_t>(), r.at(1).get<std::uint64_t>()});
  p.per_visit_count = j.at("per_visit_count").get<std::uint32_t>();
  p.topology_tag = topology_tag;
  const std::size_t n = p.key.path.size();
  if (p.key.bytes_in.size() != n || p.key.bytes_out.size() != n ||
      p.key.ocall_indices.size() != n || p.delay_ranges.size() != n)
    throw ValidationError("profiled packet arrays disagree in length");
  for (const DelayRange& r : p.delay_ranges)
    if (r.min_cycles > r.max_cycles) throw ValidationError("delay range inverted");
  if (p.per_visit_count < 1) throw ValidationError("per_visit_count must be >= 1");
  return p;
}

}  // namespace

void write_profiles_json(std::span<const PageProfile> profiles, std::ostream& out) {
  json list = json::array();
  for (const PageProfile& profile : profiles) {
    json packets = json::array();
    for (const ProfiledPacket& p : profile.packets)
      packets.push_back(profiled_packet_to_json(p));
    list.push_back(json{{"page_id", profile.page_id},
                        {"topology_tag", profile.topology_tag},
                        {"interval_threshold_t", profile.interval_threshold_t},
                        {"total_per_visit", profile.total_per_visit},
                        {"packets", std::move(packets)},
                        {"exemplar_sequences", profile.exemplar_sequences}});
  }
  json doc{{"format", kProfileFormat}, {"profiles", std::move(list)}};
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("profile write failed");
}

std::vector<PageProfile> read_profiles_json(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("profile JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kProfileFormat)
      throw ParseError("unsupported profile format");
    std::vector<PageProfile> profiles;
    for (const json& jp : doc.at("profiles")) {
      PageProfile profile;
      profile.page_id = jp.at("page_id").get<std::uint32_t>();
      profile.topology_tag = jp.at("topology_tag").get<std::uint64_t>();
      profile.interval_threshold_t = jp.at("interval_threshold_t").get<double>();
      profile.total_per_visit = jp.at("total_per_visit").get<std::uint32_t>();
      for (const json& p : jp.at("packets"))
        profile.packets.push_back(profiled_packet_from_json(p, profile.topology_tag));
      profile.exemplar_sequences =
          jp.at("exemplar_sequences").get<std::vector<std::vector<std::uint32_t>>>();
      if (profile.packets.empty()) throw ValidationError("profile without packets");
      if (profile.interval_threshold_t <= 0.0)
        throw ValidationError("interval threshold must be positive");
      for (const auto& seq : profile.exemplar_sequences)
        for (std::uint32_t tok : seq)
          if (tok >= profile.packets.size())
            throw ValidationError("exemplar index out of range");
      profiles.push_back(std::move(profile));
    }
    return profiles;
  } catch (const json::exception& e) {
    throw ParseError(std::string("profile JSON: ") + e.what());
  }
}

}  // namespace isclab
