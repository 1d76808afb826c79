// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. The heavy attack scenarios share one prepared offline
// state (same standard corpus, profiles and classifiers).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "isclab/experiment.hpp"

using namespace isclab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig standard_config() {
  ExperimentConfig config;
  config.seed = 1;
  config.n_pages = 100;
  config.corpus.tracked_count = 50;
  config.corpus.dynamic_fraction = 0.3;
  return config;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Shared across criteria 3, 4 and 6.
struct SharedState {
  ExperimentConfig config = standard_config();
  OfflineState offline;
  bool ready = false;

  const OfflineState& get() {
    if (!ready) {
      offline = run_offline(config);
      ready = true;
    }
    return offline;
  }
};
SharedState g_shared;

// ---- criterion 1: matching-indicator arithmetic ----------------------------

bool run_eq1(std::string& detail) {
  MatchingIndicator indicator{7, {2, 4, 3, 0}};
  if (r_appeared(indicator) != 0.75) {
    detail = "R(2,4,3,0) != 0.75";
    return false;
  }
  indicator.counts[3] = 1;  // the closing p4 match
  if (r_appeared(indicator) != 1.0) {
    detail = "R(2,4,3,1) != 1.0";
    return false;
  }
  PageProfile profile;
  profile.page_id = 7;
  for (std::uint32_t pvc : {2u, 2u, 2u, 1u}) {
    ProfiledPacket p;
    p.per_visit_count = pvc;
    profile.packets.push_back(p);
  }
  clear_indicator(indicator, profile);
  if (indicator.counts != std::vector<std::uint32_t>{0, 2, 1, 0}) {
    detail = "clearing (2,4,3,1) by (2,2,2,1) did not give (0,2,1,0)";
    return false;
  }
  if (r_appeared(indicator) != 0.5) {
    detail = "R after clearing != 0.5";
    return false;
  }
  detail = "indicator arithmetic exact";
  return true;
}

// ---- criterion 2: routing channel ------------------------------------------

bool run_routing(std::string& detail) {
  ChainConfig config;
  config.rules = generate_ruleset(5, 1000, 3000, 256);
  VirtualClock* clock = nullptr;
  Collector collector(clock, CollectorConfig{}, 2);
  ServiceChain chain(config, &collector, 2);
  collector.set_clock(&chain.clock());

  const std::uint32_t waf = config.topology.enclave_of(VnfRole::Waf);
  const std::uint32_t ids = config.topology.enclave_of(VnfRole::Ids);
  const std::uint32_t nat = config.topology.enclave_of(VnfRole::Nat);

  SplitMix64 rng(77);
  std::size_t violations = 0;
  std::size_t suspicious_count = 0;
  collector.begin_trace();
  for (int i = 0; i < 10000; ++i) {
    PacketGroundTruth p;
    p.page_id = static_cast<std::uint32_t>(rng.below(64));
    p.object_id = static_cast<std::uint32_t>(rng.below(16));
    p.kind = PacketKind::ResponseSegment;
    p.payload_bytes = rng.range(101, 1460);
    p.suspicious = rng.chance(0.3);
    p.loggable = p.suspicious && rng.chance(0.4);
    if (p.suspicious) ++suspicious_count;

    const std::size_t before = collector.pending_events().size();
    chain.process_packet(p);
    const auto events = collector.pending_events().subspan(before);

    std::vector<std::uint32_t> ecalls;
    for (const InterfaceEvent& e : events)
      if (e.direction == Direction::Ecall) ecalls.push_back(e.enclave_id);
    bool ok;
    if (p.suspicious)
      ok = ecalls.size() == 3 && ecalls[0] == waf && ecalls[1] == ids && ecalls[2] == nat;
    else
      ok = ecalls.size() == 2 && ecalls[0] == waf && ecalls[1] == nat;
    if (!ok) ++violations;
  }
  collector.finalize();

  detail = "10000 packets (" + std::to_string(suspicious_count) + " suspicious), " +
           std::to_string(violations) + " violations";
  return violations == 0 && suspicious_count > 0;
}

// ---- criterion 3: clean-world attack soundness -----------------------------

bool run_clean_world(std::string& detail) {
  const OfflineState& offline = g_shared.get();
  const OnlineRun run = run_online(g_shared.config, offline);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "page recall %.3f (need >= 0.95), page accuracy %.3f (>= 0.90), "
                "packet accuracy %.3f (>= 0.85)",
                run.report.page.recall, run.report.page.accuracy, run.report.packet.accuracy);
  detail = buf;
  return run.report.page.recall >= 0.95 && run.report.page.accuracy >= 0.90 &&
         run.report.packet.accuracy >= 0.85;
}

// ---- criterion 4: countermeasure effectiveness -----------------------------

bool run_defended(std::string& detail) {
  const OfflineState& offline = g_shared.get();
  ExperimentConfig config = g_shared.config;
  BatchPolicy batching;
  batching.threshold_n = 8;
  config.defenses.batching = batching;
  config.defenses.padding = PaddingPolicy::max_len(0);  // sized to the corpus
  const OnlineRun run = run_online(config, offline);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "page accuracy %.3f (need <= 0.05), page recall %.3f (<= 0.05), "
                "%llu detections",
                run.report.page.accuracy, run.report.page.recall,
                static_cast<unsigned long long>(run.report.page.detections));
  detail = buf;
  return run.report.page.accuracy <= 0.05 && run.report.page.recall <= 0.05;
}

// ---- criterion 5: padding arithmetic ---------------------------------------

bool run_padding(std::string& detail) {
  for (std::uint64_t x : {100ull, 200ull, 500ull, 1000ull}) {
    const PaddingPolicy policy = PaddingPolicy::multiple_of(x);
    for (std::uint64_t length = 1; length <= 5000; ++length) {
      std::uint64_t n = 1;
      while (n * x <= length) ++n;  // loop oracle
      const std::uint64_t got = pad_length(length, policy);
      if (got != n * x || got <= length || got > length + x || got % x != 0) {
        detail = "mismatch at L=" + std::to_string(length) + " x=" + std::to_string(x);
        return false;
      }
    }
  }
  detail = "20000 (L, x) pairs against the loop oracle";
  return true;
}

// ---- criterion 6: noise degradation ----------------------------------------

bool run_noise_sweep(std::string& detail) {
  const OfflineState& offline = g_shared.get();

  // A must exceed half the narrowest profiled delay-range width.
  std::uint64_t narrowest = ~0ull;
  for (const PageProfile& profile : offline.profiles)
    for (const ProfiledPacket& packet : profile.packets)
      for (const DelayRange& r : packet.delay_ranges)
        narrowest = std::min(narrowest, r.max_cycles - r.min_cycles);
  const std::uint64_t amplitude = narrowest / 2 + 32;

  std::vector<double> recalls;
  std::ostringstream log;
  for (std::uint64_t factor : {0ull, 1ull, 2ull, 4ull}) {
    ExperimentConfig config = g_shared.config;
    config.chain.delay.noise_amplitude = amplitude * factor;
    config.collector.noise_amplitude = amplitude * factor;
    const OnlineRun run = run_online(config, offline);
    recalls.push_back(run.report.page.recall);
    log << (factor ? " " : "") << amplitude * factor << ":" << run.report.page.recall;
  }
  bool monotone = true;
  for (std::size_t i = 1; i < recalls.size(); ++i)
    if (recalls[i] > recalls[i - 1]) monotone = false;
  detail = "narrowest width " + std::to_string(narrowest) + ", recall by amplitude {" +
           log.str() + "}";
  return monotone && recalls.front() >= 0.95;
}

// ---- criterion 7: classifier gradient check --------------------------------

bool run_gradient_check(std::string& detail) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const RecurrentParams params = RecurrentParams::seeded(4, 3, 5, seed);
    SplitMix64 rng(seed * 13);
    std::vector<SequenceSample> batch;
    for (int s = 0; s < 4; ++s) {
      SequenceSample sample;
      const std::size_t len = 2 + rng.below(5);
      for (std::size_t i = 0; i < len; ++i)
        sample.tokens.push_back(static_cast<std::uint32_t>(rng.below(4)));
      sample.legal = rng.chance(0.5);
      batch.push_back(std::move(sample));
    }
    const LossGrad lg = loss_and_grad(params, batch);
    for (std::size_t i = 0; i < params.parameter_count(); ++i) {
      RecurrentParams plus = params;
      plus.set_flat(i, params.get_flat(i) + 1e-5);
      RecurrentParams minus = params;
      minus.set_flat(i, params.get_flat(i) - 1e-5);
      const double numeric =
          (loss_and_grad(plus, batch).loss - loss_and_grad(minus, batch).loss) / 2e-5;
      const double analytic = lg.grad.get_flat(i);
      const double rel = std::abs(analytic - numeric) /
                         std::max(1e-6, std::abs(analytic) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max relative error %.3e over 10 seeds (need <= 1e-4)", worst);
  detail = buf;
  return worst <= 1e-4;
}

// ---- criterion 8: oracle equivalences ---------------------------------------

bool run_oracles(std::string& detail) {
  // NAT trie against the linear scan.
  SplitMix64 rng(404);
  std::vector<NatEntry> entries{NatEntry{0, 0, 0}};
  for (int i = 0; i < 1000; ++i) {
    NatEntry e;
    e.prefix_len = static_cast<std::uint8_t>(rng.range(1, 32));
    const std::uint32_t mask = ~std::uint32_t{0} << (32 - e.prefix_len);
    e.prefix = static_cast<std::uint32_t>(rng.next()) & mask;
    e.translation = static_cast<std::uint32_t>(rng.next());
    entries.push_back(e);
  }
  const NatTrie trie(entries);
  for (int i = 0; i < 1000; ++i) {
    std::uint32_t address = static_cast<std::uint32_t>(rng.next());
    if (rng.chance(0.5)) {
      const NatEntry& e = entries[rng.below(entries.size())];
      const std::uint32_t keep = e.prefix_len == 0 ? 0u : ~std::uint32_t{0}
                                                              << (32 - e.prefix_len);
      address = (e.prefix & keep) | (address & ~keep);
    }
    const NatLookup got = trie.lookup(address);
    const NatLookup want = linear_scan_lookup(entries, address);
    if (got.matched != want.matched || got.translation != want.translation ||
        got.matched_len != want.matched_len) {
      detail = "trie/linear-scan disagreement at lookup " + std::to_string(i);
      return false;
    }
  }

  // Interval filter against brute force over every buffer of <= 10 entries.
  std::vector<double> universe;
  for (int i = 0; i < 10; ++i) universe.push_back(rng.real(0.0, 10.0));
  for (std::uint32_t mask = 1; mask < (1u << 10); ++mask) {
    std::vector<double> times;
    for (int i = 0; i < 10; ++i)
      if (mask & (1u << i)) times.push_back(universe[i]);
    const double t = 1.5;
    std::vector<std::size_t> brute;
    for (std::size_t i = 0; i < times.size(); ++i) {
      bool keep = times.size() == 1;
      for (std::size_t j = 0; j < times.size(); ++j)
        if (i != j && std::abs(times[i] - times[j]) <= t) keep = true;
      if (keep) brute.push_back(i);
    }
    if (interval_filter_stage1(times, t) != brute) {
      detail = "interval filter disagreement on subset mask " + std::to_string(mask);
      return false;
    }
  }
  detail = "trie == linear scan (1000 lookups); stage-1 filter == brute force (1023 buffers)";
  return true;
}

// ---- criterion 9: determinism -----------------------------------------------

bool run_determinism(std::string& detail) {
  ExperimentConfig config;
  config.seed = 97;
  config.n_pages = 20;
  config.corpus.tracked_count = 10;
  config.attack.training_visits = 8;
  config.attack.train.epochs = 250;

  const fs::path dir_a = fs::temp_directory_path() / "isclab_accept_a";
  const fs::path dir_b = fs::temp_directory_path() / "isclab_accept_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  const MetricsReport a = run_experiment(config, dir_a);
  const MetricsReport b = run_experiment(config, dir_b);

  const bool traces_equal = slurp(dir_a / "trace.isctrace") == slurp(dir_b / "trace.isctrace");
  const bool artifacts_equal =
      slurp(dir_a / "corpus.json") == slurp(dir_b / "corpus.json") &&
      slurp(dir_a / "profiles.json") == slurp(dir_b / "profiles.json") &&
      slurp(dir_a / "detections.csv") == slurp(dir_b / "detections.csv") &&
      slurp(dir_a / "session.csv") == slurp(dir_b / "session.csv") &&
      slurp(dir_a / "report.csv") == slurp(dir_b / "report.csv");
  const bool reports_equal =
      a.page.accuracy == b.page.accuracy && a.page.recall == b.page.recall &&
      a.packet.accuracy == b.packet.accuracy && a.packet.recall == b.packet.recall &&
      a.bandwidth_overhead_frac == b.bandwidth_overhead_frac &&
      a.sim_cycles_per_packet == b.sim_cycles_per_packet &&
      a.total_packets == b.total_packets && a.total_events == b.total_events;
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  detail = std::string("trace bytes ") + (traces_equal ? "identical" : "DIFFER") +
           ", artifacts " + (artifacts_equal ? "identical" : "DIFFER") + ", report " +
           (reports_equal ? "identical" : "DIFFERS");
  return traces_equal && artifacts_equal && reports_equal;
}

// ---- criterion 10: compression channel --------------------------------------

bool run_compression(std::string& detail) {
  ChainConfig config;
  config.rules = generate_ruleset(5, 50, 50, 8);
  ServiceChain chain(config, nullptr, 3);

  SplitMix64 rng(2025);
  double worst_text = 1.0;
  double worst_image = 0.0;
  for (int i = 0; i < 1000; ++i) {
    PacketGroundTruth p;
    p.page_id = static_cast<std::uint32_t>(rng.below(500));
    p.object_id = static_cast<std::uint32_t>(rng.below(32));
    p.kind = PacketKind::ResponseSegment;
    p.payload_bytes = rng.range(101, 4096);
    p.content_class = i % 2 == 0 ? ContentClass::Text : ContentClass::Image;
    const std::uint64_t out = chain.wanopt_process(p).new_payload_bytes;
    const double ratio = 1.0 - static_cast<double>(out) / static_cast<double>(p.payload_bytes);
    if (p.content_class == ContentClass::Text) {
      worst_text = std::min(worst_text, ratio);
      if (ratio < 0.30) {
        detail = "text object compressed below 0.30 (L=" + std::to_string(p.payload_bytes) + ")";
        return false;
      }
    } else {
      worst_image = std::max(worst_image, ratio);
      if (ratio > 0.05) {
        detail = "image object compressed above 0.05 (L=" + std::to_string(p.payload_bytes) + ")";
        return false;
      }
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "1000 objects: min text ratio %.4f, max image ratio %.4f",
                worst_text, worst_image);
  detail = buf;
  return worst_text >= 0.30 && worst_image <= 0.05;
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    bool (*run)(std::string&);
  };
  const std::vector<Criterion> criteria{
      {1, "matching-indicator arithmetic exactness", run_eq1},
      {2, "routing channel (WAF->IDS vs WAF->NAT)", run_routing},
      {3, "clean-world attack soundness", run_clean_world},
      {4, "countermeasure effectiveness (batch n=8 + MaxLen)", run_defended},
      {5, "padding arithmetic vs loop oracle", run_padding},
      {6, "noise degradation sweep", run_noise_sweep},
      {7, "classifier gradient check", run_gradient_check},
      {8, "oracle equivalences (trie, interval filter)", run_oracles},
      {9, "end-to-end determinism", run_determinism},
      {10, "compression channel separation", run_compression},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool passed = false;
    try {
      passed = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %2d: %s — %s (%.2f s)\n", passed ? "PASS" : "FAIL",
                criterion.number, criterion.name, detail.c_str(), seconds);
    std::fflush(stdout);
    if (!passed) ++failures;
  }
  if (failures == 0)
    std::printf("all %zu acceptance criteria passed\n", criteria.size());
  else
    std::printf("%d acceptance criteria FAILED\n", failures);
  return failures;
}
