#include <doctest.h>

#include <set>

#include "isclab/errors.hpp"
#include "isclab/recognition.hpp"
#include "isclab/rng.hpp"

using namespace isclab;

namespace {

PacketFeatureVector marker_fv(std::uint32_t marker, std::uint64_t delay = 1000) {
  PacketFeatureVector fv;
  fv.topology_tag = 1;
  VnfObservation o;
  o.enclave_id = 2;
  o.param_bytes_in = 29 + 16 * (10 + marker);
  o.param_bytes_out = o.param_bytes_in;
  o.delay_cycles = delay;
  o.ocall_indices = {0};
  fv.vnfs.push_back(o);
  return fv;
}

// One-slot-per-marker profile with configurable per-visit counts.
PageProfile marker_profile(std::uint32_t page_id, const std::vector<std::uint32_t>& per_visit,
                           double t = 5.0) {
  PageProfile profile;
  profile.page_id = page_id;
  profile.topology_tag = 1;
  profile.interval_threshold_t = t;
  for (std::uint32_t i = 0; i < per_visit.size(); ++i) {
    ProfiledPacket p;
    p.key = marker_fv(i).discrete();
    p.delay_ranges = {DelayRange{1000, 1000}};
    p.per_visit_count = per_visit[i];
    p.topology_tag = 1;
    profile.packets.push_back(std::move(p));
    profile.total_per_visit += per_visit[i];
  }
  std::vector<std::uint32_t> order;
  for (std::uint32_t i = 0; i < per_visit.size(); ++i)
    for (std::uint32_t c = 0; c < per_visit[i]; ++c) order.push_back(i);
  profile.exemplar_sequences.push_back(order);
  return profile;
}

RecognitionEngine marker_engine(const std::vector<PageProfile>& profiles,
                                RecognitionConfig config = {}) {
  // Zero-weight classifiers answer 0.5 and accept every sequence, which
  // isolates the indicator/buffer mechanics under test.
  std::vector<RecurrentParams> classifiers;
  for (const PageProfile& p : profiles)
    classifiers.push_back(
        RecurrentParams::zeros(static_cast<std::uint32_t>(p.packets.size()), 2, 3));
  return RecognitionEngine(profiles, classifiers, config);
}

std::vector<std::size_t> brute_force_stage1(std::span<const double> times, double t) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    bool keep = times.size() == 1;
    for (std::size_t j = 0; j < times.size(); ++j)
      if (i != j && std::abs(times[i] - times[j]) <= t) keep = true;
    if (keep) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_CASE("R_appeared is the fraction of slots seen at least once") {
  MatchingIndicator indicator{7, {2, 4, 3, 0}};
  CHECK(r_appeared(indicator) == doctest::Approx(0.75));
  indicator.counts = {2, 4, 3, 1};
  CHECK(r_appeared(indicator) == doctest::Approx(1.0));
  indicator.counts = {0, 0, 0, 0};
  CHECK(r_appeared(indicator) == doctest::Approx(0.0));
  indicator.counts = {};
  CHECK_THROWS_AS(r_appeared(indicator), ContractError);
}

TEST_CASE("R_appeared equals a direct recount on random indicators") {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    MatchingIndicator indicator;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i)
      indicator.counts.push_back(static_cast<std::uint32_t>(rng.below(5)));
    std::size_t positive = 0;
    for (std::uint32_t c : indicator.counts)
      if (c > 0) ++positive;
    CHECK(r_appeared(indicator) ==
          doctest::Approx(static_cast<double>(positive) / static_cast<double>(n)));
  }
}

TEST_CASE("clearing consumes one visit's appearances") {
  const PageProfile profile = marker_profile(7, {2, 2, 2, 1});
  MatchingIndicator indicator{7, {2, 4, 3, 1}};
  clear_indicator(indicator, profile);
  CHECK(indicator.counts == std::vector<std::uint32_t>{0, 2, 1, 0});
  CHECK(r_appeared(indicator) == doctest::Approx(0.5));

  indicator.counts = {2, 2, 2, 1};
  clear_indicator(indicator, profile);
  CHECK(indicator.counts == std::vector<std::uint32_t>{0, 0, 0, 0});

  indicator.counts = {1, 0, 5, 0};  // inconsistent state clamps at zero
  clear_indicator(indicator, profile);
  CHECK(indicator.counts == std::vector<std::uint32_t>{0, 0, 3, 0});
}

TEST_CASE("the worked 2,4,3,0 indicator fires on the closing packet") {
  RecognitionEngine engine = marker_engine({marker_profile(7, {2, 2, 2, 1})});
  const std::vector<std::uint32_t> arrivals{0, 0, 1, 1, 1, 1, 2, 2, 2};
  double at = 0.0;
  for (std::uint32_t marker : arrivals) {
    const auto events = engine.ingest(TimedFeature{marker_fv(marker), at += 0.1, 0});
    CHECK(events.empty());
  }
  CHECK(engine.indicator(0).counts == std::vector<std::uint32_t>{2, 4, 3, 0});
  CHECK(r_appeared(engine.indicator(0)) == doctest::Approx(0.75));

  const auto events = engine.ingest(TimedFeature{marker_fv(3), at += 0.1, 0});
  REQUIRE(events.size() == 1);
  CHECK(events[0].page_id == 7);
  CHECK(events[0].r_before == doctest::Approx(0.75));
  // after detection the indicator lost one visit's worth: (0,2,1,0)
  CHECK(engine.indicator(0).counts == std::vector<std::uint32_t>{0, 2, 1, 0});
}

TEST_CASE("non-matching packets change nothing") {
  RecognitionEngine engine = marker_engine({marker_profile(7, {1, 1})});
  const auto events = engine.ingest(TimedFeature{marker_fv(55), 0.0, 0});
  CHECK(events.empty());
  CHECK(engine.indicator(0).counts == std::vector<std::uint32_t>{0, 0});
  CHECK(engine.buffer(0).empty());
}

TEST_CASE("a shared packet increments every matching page") {
  RecognitionEngine engine =
      marker_engine({marker_profile(1, {1, 1}), marker_profile(2, {1, 1})});
  engine.ingest(TimedFeature{marker_fv(0), 0.0, 0});
  CHECK(engine.indicator(0).counts == std::vector<std::uint32_t>{1, 0});
  CHECK(engine.indicator(1).counts == std::vector<std::uint32_t>{1, 0});
}

TEST_CASE("buffer entries expire after 30 seconds and release their counter") {
  RecognitionEngine engine = marker_engine({marker_profile(7, {1, 1})});
  engine.ingest(TimedFeature{marker_fv(0), 0.0, 0});
  CHECK(engine.indicator(0).counts == std::vector<std::uint32_t>{1, 0});

  engine.expire_buffer(29.0);  // aged 29 s: retained
  CHECK(engine.buffer(0).size() == 1);
  CHECK(engine.indicator(0).counts == std::vector<std::uint32_t>{1, 0});

  engine.expire_buffer(31.0);  // aged 31 s: removed
  CHECK(engine.buffer(0).empty());
  CHECK(engine.indicator(0).counts == std::vector<std::uint32_t>{0, 0});
}

TEST_CASE("expiry runs lazily from ingest timestamps") {
  RecognitionEngine engine = marker_engine({marker_profile(7, {1, 1})});
  engine.ingest(TimedFeature{marker_fv(0), 0.0, 1});
  const auto events = engine.ingest(TimedFeature{marker_fv(1), 40.0, 2});
  // the marker-0 entry expired before the marker-1 packet landed
  CHECK(events.empty());
  CHECK(engine.indicator(0).counts == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("interval filter stage 1 drops isolated entries") {
  const std::vector<double> times{0.0, 0.1, 9.9};
  CHECK(interval_filter_stage1(times, 1.0) == std::vector<std::size_t>{0, 1});
  const std::vector<double> lone{4.2};
  CHECK(interval_filter_stage1(lone, 1.0) == std::vector<std::size_t>{0});
}

TEST_CASE("interval filter stage 2 legality") {
  CHECK(sequence_legal(std::vector<double>{0.0, 0.5, 0.9}, 1.0));
  CHECK_FALSE(sequence_legal(std::vector<double>{0.0, 0.5, 1.6}, 1.0));
  CHECK(sequence_legal(std::vector<double>{}, 1.0));
}

TEST_CASE("interval filter agrees with the brute-force oracle on all small buffers") {
  SplitMix64 rng(99);
  std::vector<double> universe;
  for (int i = 0; i < 10; ++i) universe.push_back(rng.real(0.0, 10.0));
  for (std::uint32_t mask = 1; mask < (1u << 10); ++mask) {
    std::vector<double> times;
    for (int i = 0; i < 10; ++i)
      if (mask & (1u << i)) times.push_back(universe[i]);
    const double t = 1.5;
    CHECK(interval_filter_stage1(times, t) == brute_force_stage1(times, t));
    bool legal = true;
    for (std::size_t i = 0; i < times.size() && legal; ++i)
      for (std::size_t j = i + 1; j < times.size() && legal; ++j)
        if (std::abs(times[i] - times[j]) > t) legal = false;
    CHECK(sequence_legal(times, t) == legal);
  }
}

TEST_CASE("training-order buffers attribute fully") {
  const PageProfile profile = marker_profile(3, {1, 1, 1}, 2.0);
  RecognitionEngine engine = marker_engine({profile});
  std::vector<RecognitionEvent> events;
  double at = 0.0;
  std::uint64_t uid = 100;
  for (std::uint32_t marker : {0u, 1u, 2u})
    for (const auto& e : engine.ingest(TimedFeature{marker_fv(marker), at += 0.3, uid++}))
      events.push_back(e);
  REQUIRE(events.size() == 1);
  CHECK(events[0].attributed.size() == 3);
  CHECK(events[0].recognized_uids == std::vector<std::uint64_t>{100, 101, 102});
}

TEST_CASE("candidate space multiplies per-slot instances") {
  // 2 x 4 x 3 x 1 buffered instances -> 24 candidates before the cap
  const PageProfile profile = marker_profile(7, {2, 2, 2, 1}, 10.0);
  RecognitionConfig config;
  config.candidate_cap = 23;  // strictly below the candidate count
  RecognitionEngine capped = marker_engine({profile}, config);
  RecognitionEngine uncapped = marker_engine({profile});

  const std::vector<std::uint32_t> arrivals{0, 0, 1, 1, 1, 1, 2, 2, 2, 3};
  double at = 0.0;
  std::vector<RecognitionEvent> capped_events, uncapped_events;
  for (std::uint32_t marker : arrivals) {
    const TimedFeature tf{marker_fv(marker), at += 0.1, marker};
    for (const auto& e : capped.ingest(tf)) capped_events.push_back(e);
    for (const auto& e : uncapped.ingest(tf)) uncapped_events.push_back(e);
  }
  REQUIRE(capped_events.size() == 1);
  REQUIRE(uncapped_events.size() == 1);
  CHECK(capped_events[0].candidate_cap_hit);
  CHECK_FALSE(uncapped_events[0].candidate_cap_hit);
  CHECK(capped.cap_hits() == 1);
}

TEST_CASE("stage-1-filtered entries are never attributed") {
  const PageProfile profile = marker_profile(3, {1, 1}, 1.0);
  RecognitionEngine engine = marker_engine({profile});
  // an early stray instance of marker 0, isolated by more than t
  engine.ingest(TimedFeature{marker_fv(0), 0.0, 500});
  engine.ingest(TimedFeature{marker_fv(0), 10.0, 501});
  const auto events = engine.ingest(TimedFeature{marker_fv(1), 10.2, 502});
  REQUIRE(events.size() == 1);
  for (std::uint64_t uid : events[0].recognized_uids) CHECK(uid != 500);
}

TEST_CASE("detection with an emptied slot reports no packets") {
  const PageProfile profile = marker_profile(3, {1, 1}, 0.5);
  RecognitionEngine engine = marker_engine({profile});
  // the two matches are mutually isolated: stage 1 clears both slots
  engine.ingest(TimedFeature{marker_fv(0), 0.0, 1});
  const auto events = engine.ingest(TimedFeature{marker_fv(1), 10.0, 2});
  REQUIRE(events.size() == 1);  // page detected
  CHECK(events[0].attributed.empty());
  CHECK(events[0].recognized_uids.empty());
}

TEST_CASE("same visit twice in series yields exactly two detections") {
  const PageProfile profile = marker_profile(5, {1, 1, 1}, 2.0);
  RecognitionEngine engine = marker_engine({profile});
  int detections = 0;
  double at = 0.0;
  for (int visit = 0; visit < 2; ++visit)
    for (std::uint32_t marker : {0u, 1u, 2u})
      detections += static_cast<int>(
          engine.ingest(TimedFeature{marker_fv(marker), at += 0.2, 0}).size());
  CHECK(detections == 2);
}

TEST_CASE("detections only fire at full coverage") {
  const PageProfile profile = marker_profile(5, {1, 1, 1}, 2.0);
  RecognitionEngine engine = marker_engine({profile});
  CHECK(engine.ingest(TimedFeature{marker_fv(0), 0.1, 0}).empty());
  CHECK(engine.ingest(TimedFeature{marker_fv(0), 0.2, 0}).empty());
  CHECK(engine.ingest(TimedFeature{marker_fv(1), 0.3, 0}).empty());
  CHECK(r_appeared(engine.indicator(0)) < 1.0);
  CHECK(engine.ingest(TimedFeature{marker_fv(2), 0.4, 0}).size() == 1);
}
