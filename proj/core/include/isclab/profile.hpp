#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "isclab/chain.hpp"
#include "isclab/corpus.hpp"
#include "isclab/features.hpp"
#include "isclab/trace.hpp"

namespace isclab {

// One packet observation as the attacker keeps it: extracted features, the
// arrival time, and (for scoring only, never read by the attack) the
// ground-truth packet uid.
struct TimedFeature {
  PacketFeatureVector fv;
  double arrival_time = 0.0;
  std::uint64_t packet_uid = 0;
};

using VisitObservation = std::vector<TimedFeature>;

inline constexpr std::uint64_t kUnknownUid = 0xfeedfeedfeedfeedull;

// A tracked page's profiling set.
struct PageProfile {
  std::uint32_t page_id = 0;
  std::vector<ProfiledPacket> packets;  // size T >= 1
  double interval_threshold_t = 0.05;   // max within-visit gap seen in training
  std::vector<std::vector<std::uint32_t>> exemplar_sequences;  // k = N orderings
  std::uint32_t total_per_visit = 0;
  std::uint64_t topology_tag = 0;
};

// Splits an event stream recorded under the one-packet-in-flight discipline
// into per-packet feature vectors. Event runs that do not parse as a single
// packet traversal (e.g. batch-level traces) are returned as-is: their path
// will not match any profiled packet.
std::vector<PacketFeatureVector> extract_packet_features(std::span<const InterfaceEvent> events,
                                                         const ChainTopology& topology);

// Replays the page through the chain N times (N >= 2), one packet in flight
// at a time, and returns the per-visit observations the attacker collects.
std::vector<VisitObservation> collect_visits(const WebPageSpec& page, const CorpusParams& params,
                                             ServiceChain& chain, Collector& collector,
                                             std::uint32_t n_visits, std::uint64_t seed);

struct ConstantExtraction {
  std::vector<ProfiledPacket> packets;
  std::vector<std::string> warnings;  // per-visit count inconsistencies
};

// Keeps the packets (keyed by their discrete features) that appear in every
// visit; delay ranges span all observations, per-visit counts are verified
// equal across visits (taking the minimum and warning otherwise).
ConstantExtraction extract_constant_packets(std::span<const VisitObservation> visits);

// Full profile: constant packets, the interval threshold t (the largest
// within-visit arrival gap between profiled packets, with a 0.05 s floor)
// and one exemplar index sequence per training visit.
PageProfile build_profile(std::uint32_t page_id, std::span<const VisitObservation> visits);

inline constexpr const char* kProfileFormat = "ISCPROF 1";

void write_profiles_json(std::span<const PageProfile> profiles, std::ostream& out);
std::vector<PageProfile> read_profiles_json(std::istream& in);

}  // namespace isclab
