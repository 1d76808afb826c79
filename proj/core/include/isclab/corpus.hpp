#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "isclab/packets.hpp"

namespace isclab {

// One web object: a request plus the response segments it is split into.
struct ObjectSpec {
  std::uint32_t object_id = 0;
  std::uint64_t request_bytes = 0;
  std::vector<std::uint64_t> response_segments;  // each > 100 bytes
  ContentClass content_class = ContentClass::Text;
  bool suspicious = false;
  bool loggable = false;
  bool constant = true;  // response segments recur identically per visit
};

struct WebPageSpec {
  std::uint32_t page_id = 0;
  std::vector<ObjectSpec> objects;  // at least one with constant = true
  double dynamic_fraction = 0.3;
};

// Shape of the synthetic corpus. All knobs, no claims.
struct CorpusParams {
  std::uint32_t tracked_count = 50;
  std::uint32_t min_objects = 6;
  std::uint32_t max_objects = 16;
  std::uint32_t min_segments = 1;
  std::uint32_t max_segments = 4;
  std::uint64_t min_segment_bytes = 101;  // sub-100-byte control packets excluded
  std::uint64_t max_segment_bytes = 1460;
  std::uint64_t min_request_bytes = 101;
  std::uint64_t max_request_bytes = 700;
  double text_probability = 0.65;
  double suspicious_probability = 0.05;
  double loggable_probability = 0.10;
  double dynamic_fraction = 0.3;
  double render_window_s = 2.0;  // all packets of a visit land inside this

  void validate() const;  // throws ConfigError on degenerate settings
};

struct Corpus {
  std::uint64_t seed = 0;
  std::vector<WebPageSpec> pages;         // unique page ids
  std::vector<std::uint32_t> tracked_ids; // subset of page ids, sorted
  CorpusParams params;

  const WebPageSpec& page(std::uint32_t page_id) const;  // ConfigError if absent
  std::uint64_t max_payload_bytes() const;
};

struct VisitPlanEntry {
  std::uint32_t page_id = 0;
  double start_time = 0.0;
};

struct SessionStream {
  std::vector<PacketGroundTruth> packets;  // non-decreasing arrival_time
};

// Deterministic function of (seed, n_pages, params). Every page gets at
// least one constant object regardless of dynamic_fraction.
Corpus generate_corpus(std::uint64_t seed, std::uint32_t n_pages, const CorpusParams& params);

// One visit of a page: requests and response segments with arrival offsets
// inside the render window. Constant objects (and every request) reproduce
// the same sizes and offsets on every visit; dynamic objects redraw their
// segment sizes and offsets from visit_seed.
std::vector<PacketGroundTruth> render_visit(const WebPageSpec& page, std::uint64_t visit_seed,
                                            double start_time, const CorpusParams& params);

// Renders every planned visit and merges the packets into one time-ordered
// stream with globally unique packet uids.
SessionStream interleave_sessions(const Corpus& corpus, const std::vector<VisitPlanEntry>& plan,
                                  std::uint64_t seed);

// Corpus file: JSON with top-level fields seed, pages[], tracked_ids[].
void write_corpus_json(const Corpus& corpus, std::ostream& out);
Corpus read_corpus_json(std::istream& in);

// Session stream file: CSV
//   packet_uid,page_id,object_id,kind,bytes,class,suspicious,loggable,constant,arrival_time
void write_session_csv(const SessionStream& session, std::ostream& out);
SessionStream read_session_csv(std::istream& in);

}  // namespace isclab
