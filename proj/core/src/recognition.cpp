#include "isclab/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "isclab/errors.hpp"

namespace isclab {

double r_appeared(const MatchingIndicator& indicator) {
  if (indicator.counts.empty()) throw ContractError("indicator needs T >= 1");
  std::size_t appeared = 0;
  for (std::uint32_t c : indicator.counts)
    if (c > 0) ++appeared;
  return static_cast<double>(appeared) / static_cast<double>(indicator.counts.size());
}

void clear_indicator(MatchingIndicator& indicator, const PageProfile& profile) {
  for (std::size_t i = 0; i < indicator.counts.size(); ++i) {
    const std::uint32_t pvc = profile.packets[i].per_visit_count;
    indicator.counts[i] = indicator.counts[i] > pvc ? indicator.counts[i] - pvc : 0;
  }
}

std::vector<std::size_t> interval_filter_stage1(std::span<const double> times, double t) {
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < times.size(); ++i) {
    bool near_someone = times.size() == 1;
    for (std::size_t j = 0; j < times.size() && !near_someone; ++j)
      near_someone = i != j && std::abs(times[i] - times[j]) <= t;
    if (near_someone) survivors.push_back(i);
  }
  return survivors;
}

bool sequence_legal(std::span<const double> times, double t) {
  for (std::size_t i = 0; i < times.size(); ++i)
    for (std::size_t j = i + 1; j < times.size(); ++j)
      if (std::abs(times[i] - times[j]) > t) return false;
  return true;
}

std::vector<BufferEntry> recognize_packets(std::span<const BufferEntry> contributing,
                                           const PageProfile& profile,
                                           const RecurrentParams& classifier,
                                           const RecognitionConfig& config, bool* cap_hit) {
  if (cap_hit) *cap_hit = false;

  std::vector<double> times;
  times.reserve(contributing.size());
  for (const BufferEntry& e : contributing) times.push_back(e.arrival_time);
  const std::vector<std::size_t> survivors =
      interval_filter_stage1(times, profile.interval_threshold_t);

  const std::size_t n_slots = profile.packets.size();
  std::vector<std::vector<const BufferEntry*>> per_slot(n_slots);
  for (std::size_t idx : survivors) per_slot[contributing[idx].slot].push_back(&contributing[idx]);
  for (auto& slot : per_slot) {
    if (slot.empty()) return {};  // page detected, packets unknown
    std::sort(slot.begin(), slot.end(), [](const BufferEntry* a, const BufferEntry* b) {
      return a->arrival_seq < b->arrival_seq;
    });
  }

  std::set<std::uint64_t> attributed_seqs;
  std::vector<BufferEntry> attributed;
  std::vector<std::size_t> choice(n_slots, 0);
  std::vector<const BufferEntry*> candidate(n_slots);
  std::vector<double> cand_times(n_slots);
  std::vector<std::uint32_t> tokens(n_slots);

  std::uint64_t enumerated = 0;
  bool exhausted = false;
  while (!exhausted) {
    if (enumerated >= config.candidate_cap) {
      if (cap_hit) *cap_hit = true;
      break;
    }
    ++enumerated;

    for (std::size_t s = 0; s < n_slots; ++s) candidate[s] = per_slot[s][choice[s]];
    std::sort(candidate.begin(), candidate.end(),
              [](const BufferEntry* a, const BufferEntry* b) {
                return a->arrival_seq < b->arrival_seq;
              });
    for (std::size_t s = 0; s < n_slots; ++s) {
      cand_times[s] = candidate[s]->arrival_time;
      tokens[s] = candidate[s]->slot;
    }

    if (sequence_legal(cand_times, profile.interval_threshold_t) &&
        forward(classifier, tokens) >= config.legality_threshold) {
      for (const BufferEntry* e : candidate)
        if (attributed_seqs.insert(e->arrival_seq).second) attributed.push_back(*e);
    }

    // Odometer step, last slot fastest.
    std::size_t s = n_slots;
    while (s-- > 0) {
      if (++choice[s] < per_slot[s].size()) break;
      choice[s] = 0;
      if (s == 0) exhausted = true;
    }
  }

  std::sort(attributed.begin(), attributed.end(),
            [](const BufferEntry& a, const BufferEntry& b) {
              return a.arrival_seq < b.arrival_seq;
            });
  return attributed;
}

RecognitionEngine::RecognitionEngine(std::vector<PageProfile> profiles,
                                     std::vector<RecurrentParams> classifiers,
                                     RecognitionConfig config)
    : config_(config) {
  if (profiles.size() != classifiers.size())
    throw ContractError("one classifier per profile required");
  pages_.reserve(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    PageState state;
    state.indicator.page_id = profiles[i].page_id;
    state.indicator.counts.assign(profiles[i].packets.size(), 0);
    state.profile = std::move(profiles[i]);
    state.classifier = std::move(classifiers[i]);
    pages_.push_back(std::move(state));
  }
}

void RecognitionEngine::expire_buffer(double now) {
  for (PageState& page : pages_) {
    auto keep = page.buffer.begin();
    for (BufferEntry& e : page.buffer) {
      if (e.expiry < now) {
        std::uint32_t& c = page.indicator.counts[e.slot];
        if (c > 0) --c;
      } else {
        *keep++ = std::move(e);
      }
    }
    page.buffer.erase(keep, page.buffer.end());
  }
}

std::vector<RecognitionEvent> RecognitionEngine::ingest(const TimedFeature& observation) {
  expire_buffer(observation.arrival_time);
  const std::uint64_t arrival_seq = next_arrival_seq_++;

  std::vector<RecognitionEvent> events;
  for (PageState& page : pages_) {
    // First matching profiled packet wins within one profile; a packet may
    // still land in several pages' indicators (the shared-packet false
    // positive source).
    std::size_t slot = page.profile.packets.size();
    for (std::size_t i = 0; i < page.profile.packets.size(); ++i) {
      if (features_match(observation.fv, page.profile.packets[i])) {
        slot = i;
        break;
      }
    }
    if (slot == page.profile.packets.size()) continue;

    const double r_before = r_appeared(page.indicator);
    ++page.indicator.counts[slot];

    BufferEntry entry;
    entry.page_id = page.profile.page_id;
    entry.slot = static_cast<std::uint32_t>(slot);
    entry.fv = observation.fv;
    entry.arrival_time = observation.arrival_time;
    entry.arrival_seq = arrival_seq;
    entry.packet_uid = observation.packet_uid;
    entry.expiry = observation.arrival_time + config_.buffer_ttl_s;
    page.buffer.push_back(std::move(entry));

    const bool complete = std::all_of(page.indicator.counts.begin(),
                                      page.indicator.counts.end(),
                                      [](std::uint32_t c) { return c > 0; });
    if (!complete) continue;

    RecognitionEvent event;
    event.page_id = page.profile.page_id;
    event.detection_time = observation.arrival_time;
    event.r_before = r_before;
    event.contributing = page.buffer;
    event.attributed = recognize_packets(event.contributing, page.profile, page.classifier,
                                         config_, &event.candidate_cap_hit);
    for (const BufferEntry& e : event.attributed) event.recognized_uids.push_back(e.packet_uid);
    if (event.candidate_cap_hit) ++cap_hits_;

    clear_indicator(page.indicator, page.profile);
    // Consume the buffered appearances the clearing accounted for (the
    // oldest per slot), so their later expiry cannot decrement the
    // indicator a second time and eat the next visit's progress.
    {
      std::vector<std::uint32_t> to_consume(page.profile.packets.size());
      for (std::size_t i = 0; i < to_consume.size(); ++i)
        to_consume[i] = page.profile.packets[i].per_visit_count;
      auto keep = page.buffer.begin();
      for (BufferEntry& e : page.buffer) {
        if (to_consume[e.slot] > 0)
          --to_consume[e.slot];
        else
          *keep++ = std::move(e);
      }
      page.buffer.erase(keep, page.buffer.end());
    }
    events.push_back(std::move(event));
  }
  return events;
}

const MatchingIndicator& RecognitionEngine::indicator(std::size_t page_index) const {
  return pages_.at(page_index).indicator;
}

std::span<const BufferEntry> RecognitionEngine::buffer(std::size_t page_index) const {
  return pages_.at(page_index).buffer;
}

}  // namespace isclab
