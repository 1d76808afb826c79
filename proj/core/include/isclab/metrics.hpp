#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "isclab/corpus.hpp"
#include "isclab/countermeasures.hpp"
#include "isclab/recognition.hpp"

namespace isclab {

// One planned visit with its ground-truth packet uids.
struct GroundTruthVisit {
  std::uint32_t page_id = 0;
  bool tracked = false;
  double start = 0.0;
  double end = 0.0;
  std::set<std::uint64_t> uids;
};

struct PageMetrics {
  double accuracy = 0.0;  // accurate detections / all detections
  double recall = 0.0;    // covered tracked visits / tracked visits
  bool accuracy_defined = false;  // false when there were no detections
  std::uint64_t detections = 0;
  std::uint64_t accurate_detections = 0;
  std::uint64_t tracked_visits = 0;
  std::uint64_t covered_visits = 0;
};

// A detection is accurate when its contributing window shares a packet with
// a real visit of the detected page; that visit counts as covered.
PageMetrics page_metrics(std::span<const RecognitionEvent> detections,
                         std::span<const GroundTruthVisit> visits);

struct PacketMetrics {
  double accuracy = 0.0;  // correct attributions / all attributions
  double recall = 0.0;    // distinct correctly attributed / tracked packets
  bool accuracy_defined = false;
  std::uint64_t attributed = 0;
  std::uint64_t correct = 0;
  std::uint64_t tracked_packets = 0;
  std::uint64_t distinct_correct = 0;
};

// An attribution (detected page, packet uid) is correct when the packet's
// ground-truth page equals the detected page.
PacketMetrics packet_metrics(std::span<const RecognitionEvent> detections,
                             const std::map<std::uint64_t, std::uint32_t>& uid_to_page,
                             std::uint64_t tracked_packet_count);

// (sum cipher_len(pad(L)) - sum cipher_len(L)) / sum cipher_len(L) over
// every request and response segment declared in the corpus.
double bandwidth_overhead(const Corpus& corpus, const PaddingPolicy& policy,
                          std::uint64_t cipher_overhead = kDefaultCipherOverhead);

}  // namespace isclab
