#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "isclab/features.hpp"
#include "isclab/lstm.hpp"
#include "isclab/profile.hpp"

namespace isclab {

// Per-page appearance counters over the profiled packets.
struct MatchingIndicator {
  std::uint32_t page_id = 0;
  std::vector<std::uint32_t> counts;  // length T
};

// Fraction of profiled packets seen at least once: N_appeared / T.
double r_appeared(const MatchingIndicator& indicator);

// Consumes one visit's worth of appearances: counts[i] loses
// per_visit_count[i], clamped at zero.
void clear_indicator(MatchingIndicator& indicator, const PageProfile& profile);

// One matched observation awaiting page detection.
struct BufferEntry {
  std::uint32_t page_id = 0;
  std::uint32_t slot = 0;  // matched profiled-packet index
  PacketFeatureVector fv;
  double arrival_time = 0.0;
  std::uint64_t arrival_seq = 0;
  std::uint64_t packet_uid = 0;  // ground-truth annotation, scoring only
  double expiry = 0.0;           // arrival_time + 30 s
};

struct RecognitionEvent {
  std::uint32_t page_id = 0;
  double detection_time = 0.0;
  double r_before = 0.0;  // R_appeared before the triggering packet
  std::vector<BufferEntry> contributing;  // buffered entries at detection
  std::vector<BufferEntry> attributed;    // entries the classifier accepted
  std::vector<std::uint64_t> recognized_uids;
  bool candidate_cap_hit = false;
};

// Stage 1 of the interval filter: survivors are entries within t seconds of
// at least one other entry (a lone entry survives vacuously). Returns the
// surviving indices in input order.
std::vector<std::size_t> interval_filter_stage1(std::span<const double> times, double t);

// Stage 2: a sequence is legal only if every pairwise arrival gap is <= t.
bool sequence_legal(std::span<const double> times, double t);

struct RecognitionConfig {
  double buffer_ttl_s = 30.0;
  std::uint32_t candidate_cap = 4096;  // bound on enumerated sequences
  double legality_threshold = 0.5;
};

// Packet recognition for one fired detection: enumerates candidate
// sequences (one buffered instance per profiled slot, ordered by arrival),
// interval-filters them and keeps the union of entries from sequences the
// classifier scores legal. cap_hit is set when enumeration was truncated.
std::vector<BufferEntry> recognize_packets(std::span<const BufferEntry> contributing,
                                           const PageProfile& profile,
                                           const RecurrentParams& classifier,
                                           const RecognitionConfig& config, bool* cap_hit);

// The online attack state machine: one engine per observed stream.
class RecognitionEngine {
 public:
  RecognitionEngine(std::vector<PageProfile> profiles, std::vector<RecurrentParams> classifiers,
                    RecognitionConfig config = {});

  // Feeds one observed packet. Matching profiles increment their indicator
  // and buffer the observation; every profile whose R_appeared reaches 1.0
  // yields a RecognitionEvent, runs packet recognition and is cleared.
  std::vector<RecognitionEvent> ingest(const TimedFeature& observation);

  // Drops buffer entries whose 30 s timer ran out, decrementing the matched
  // indicator counters to keep I consistent with B.
  void expire_buffer(double now);

  std::size_t page_count() const { return pages_.size(); }
  const MatchingIndicator& indicator(std::size_t page_index) const;
  std::span<const BufferEntry> buffer(std::size_t page_index) const;
  std::uint64_t cap_hits() const { return cap_hits_; }

 private:
  struct PageState {
    PageProfile profile;
    RecurrentParams classifier;
    MatchingIndicator indicator;
    std::vector<BufferEntry> buffer;
  };

  std::vector<PageState> pages_;
  RecognitionConfig config_;
  std::uint64_t next_arrival_seq_ = 0;
  std::uint64_t cap_hits_ = 0;
};

}  // namespace isclab
