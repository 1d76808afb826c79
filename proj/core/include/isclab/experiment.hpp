#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isclab/chain.hpp"
#include "isclab/collector.hpp"
#include "isclab/corpus.hpp"
#include "isclab/countermeasures.hpp"
#include "isclab/lstm.hpp"
#include "isclab/metrics.hpp"
#include "isclab/profile.hpp"
#include "isclab/recognition.hpp"

namespace isclab {

// Chain description as configured; rule contents are generated from the
// experiment seed when the chain is materialized.
struct ChainSetup {
  ChainTopology topology;
  std::size_t waf_rule_count = 1000;
  std::size_t ids_rule_count = 3000;
  std::size_t nat_entry_count = 256;
  DelayModel delay;
  std::uint64_t cipher_overhead = kDefaultCipherOverhead;
  std::uint32_t nat_lookup_address = 0x0a00002au;
  std::uint64_t log_record_bytes = 128;

  ChainConfig materialize(std::uint64_t seed) const;
};

struct AttackParams {
  std::uint32_t training_visits = 20;  // N, visits per tracked page
  std::uint32_t candidate_cap = 4096;  // M, candidate sequences per detection
  // The attacker profiles pages on a replica platform under their own
  // control (quiet core, per-packet delivery, no countermeasures); this is
  // the residual noise of that replica.
  std::uint64_t profiling_noise = 0;
  TrainConfig train;  // train.seed == 0 derives from the experiment seed
};

struct VisitPlanParams {
  std::uint32_t visits_per_page = 2;
  double stagger_s = 1.0;  // consecutive visit starts, overlaps render windows
};

struct SweepParams {
  std::vector<std::uint64_t> pad_multiples{200, 400, 600, 800, 1000};
  bool include_max_len = true;
  std::vector<std::uint32_t> batch_thresholds{1, 8};
  std::vector<std::uint64_t> noise_amplitudes{0, 50, 100, 200};
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::uint32_t n_pages = 100;
  CorpusParams corpus;
  ChainSetup chain;          // production chain (the online phase)
  CollectorConfig collector; // online observer
  CountermeasureConfig defenses;
  AttackParams attack;
  VisitPlanParams plan;
  SweepParams sweep;

  void validate() const;
};

ExperimentConfig config_from_json(std::istream& in);
void config_to_json(const ExperimentConfig& config, std::ostream& out);

struct MetricsReport {
  PageMetrics page;
  PacketMetrics packet;
  double bandwidth_overhead_frac = 0.0;
  double sim_cycles_per_packet = 0.0;
  std::uint64_t total_packets = 0;
  std::uint64_t total_events = 0;
  // Wall-clock numbers are informational and sit outside the deterministic
  // report body.
  double wall_packets_per_second = 0.0;
  double wall_ms = 0.0;
};

void write_report_json(const MetricsReport& report, std::ostream& out);
MetricsReport read_report_json(std::istream& in);
void write_report_csv(const MetricsReport& report, std::ostream& out);
std::string report_summary(const MetricsReport& report);

// Offline phase: corpus, per-page profiling on the attacker replica and
// classifier training. Independent pages run in parallel; results are
// deterministic in the config alone.
struct OfflineState {
  Corpus corpus;
  std::vector<PageProfile> profiles;
  std::vector<TrainResult> classifiers;  // aligned with profiles
};

OfflineState run_offline(const ExperimentConfig& config);

// Online phase: the interleaved session replays through the production
// chain (with any configured countermeasures) under the collector, and the
// recognition engine consumes the observer's per-packet features.
struct OnlineRun {
  std::vector<VisitPlanEntry> plan;
  SessionStream session;
  Trace trace;
  std::vector<RecognitionEvent> detections;
  MetricsReport report;
};

OnlineRun run_online(const ExperimentConfig& config, const OfflineState& offline);

// Full pipeline; persists every artifact (corpus, session, trace, profiles,
// classifier params, detection log, report, config) under out_dir.
MetricsReport run_experiment(const ExperimentConfig& config,
                             const std::filesystem::path& out_dir);

struct SweepRow {
  std::string padding = "none";  // none | max_len | multiple_of
  std::uint64_t pad_bytes = 0;
  std::uint32_t batch_n = 1;
  std::uint64_t noise_amplitude = 0;
  MetricsReport report;
};

// Reuses one offline phase across the countermeasure grid and the noise
// sweep; each row is one online replay.
std::vector<SweepRow> run_defense_sweep(const ExperimentConfig& config,
                                        const OfflineState& offline);
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

// Plan and scoring helpers.
std::vector<VisitPlanEntry> build_visit_plan(const Corpus& corpus, const VisitPlanParams& plan,
                                             std::uint64_t seed);
std::vector<GroundTruthVisit> ground_truth_visits(const Corpus& corpus,
                                                  const std::vector<VisitPlanEntry>& plan,
                                                  const SessionStream& session);

// MaxLen policies configured with max_bytes == 0 size themselves to the
// corpus (and the log record, which is padded too).
PaddingPolicy resolve_padding(const PaddingPolicy& policy, const Corpus& corpus,
                              std::uint64_t log_record_bytes);

void write_detections_csv(std::span<const RecognitionEvent> detections, std::ostream& out);

}  // namespace isclab
