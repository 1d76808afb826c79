#include "isclab/metrics.hpp"

#include <algorithm>

#include "isclab/cipher.hpp"
#include "isclab/errors.hpp"

namespace isclab {

PageMetrics page_metrics(std::span<const RecognitionEvent> detections,
                         std::span<const GroundTruthVisit> visits) {
  PageMetrics m;
  std::vector<bool> covered(visits.size(), false);

  for (const RecognitionEvent& event : detections) {
    ++m.detections;
    bool accurate = false;
    for (std::size_t v = 0; v < visits.size(); ++v) {
      if (visits[v].page_id != event.page_id) continue;
      const bool overlaps = std::any_of(
          event.contributing.begin(), event.contributing.end(),
          [&](const BufferEntry& e) { return visits[v].uids.count(e.packet_uid) > 0; });
      if (overlaps) {
        accurate = true;
        covered[v] = true;
      }
    }
    if (accurate) ++m.accurate_detections;
  }

  for (std::size_t v = 0; v < visits.size(); ++v) {
    if (!visits[v].tracked) continue;
    ++m.tracked_visits;
    if (covered[v]) ++m.covered_visits;
  }

  m.accuracy_defined = m.detections > 0;
  m.accuracy = m.accuracy_defined
                   ? static_cast<double>(m.accurate_detections) / static_cast<double>(m.detections)
                   : 0.0;
  m.recall = m.tracked_visits > 0 ? static_cast<double>(m.covered_visits) /
                                        static_cast<double>(m.tracked_visits)
                                  : 0.0;
  return m;
}

PacketMetrics packet_metrics(std::span<const RecognitionEvent> detections,
                             const std::map<std::uint64_t, std::uint32_t>& uid_to_page,
                             std::uint64_t tracked_packet_count) {
  PacketMetrics m;
  m.tracked_packets = tracked_packet_count;

  std::set<std::pair<std::uint32_t, std::uint64_t>> attributions;
  for (const RecognitionEvent& event : detections)
    for (std::uint64_t uid : event.recognized_uids)
      attributions.emplace(event.page_id, uid);

  std::set<std::uint64_t> correct_uids;
  for (const auto& [page_id, uid] : attributions) {
    ++m.attributed;
    auto it = uid_to_page.find(uid);
    if (it != uid_to_page.end() && it->second == page_id) {
      ++m.correct;
      correct_uids.insert(uid);
    }
  }
  m.distinct_correct = correct_uids.size();

  m.accuracy_defined = m.attributed > 0;
  m.accuracy = m.accuracy_defined
                   ? static_cast<double>(m.correct) / static_cast<double>(m.attributed)
                   : 0.0;
  m.recall = m.tracked_packets > 0 ? static_cast<double>(m.distinct_correct) /
                                         static_cast<double>(m.tracked_packets)
                                   : 0.0;
  return m;
}

double bandwidth_overhead(const Corpus& corpus, const PaddingPolicy& policy,
                          std::uint64_t cipher_overhead) {
  policy.validate();
  std::uint64_t base = 0;
  std::uint64_t padded = 0;
  for (const WebPageSpec& page : corpus.pages) {
    for (const ObjectSpec& obj : page.objects) {
      base += cipher_len(obj.request_bytes, cipher_overhead);
      padded += cipher_len(pad_length(obj.request_bytes, policy), cipher_overhead);
      for (std::uint64_t seg : obj.response_segments) {
        base += cipher_len(seg, cipher_overhead);
        padded += cipher_len(pad_length(seg, policy), cipher_overhead);
      }
    }
  }
  if (base == 0) throw ContractError("corpus carries no payload bytes");
  return static_cast<double>(padded - base) / static_cast<double>(base);
}

}  // namespace isclab
