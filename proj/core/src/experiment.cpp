#include "isclab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "isclab/errors.hpp"
#include "isclab/parallel.hpp"
#include "isclab/rng.hpp"

namespace isclab {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + it.key() + "' in " + context);
  }
}

template <class T>
void maybe_get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

ChainConfig ChainSetup::materialize(std::uint64_t seed) const {
  ChainConfig config;
  config.topology = topology;
  config.rules = generate_ruleset(seed, waf_rule_count, ids_rule_count, nat_entry_count);
  config.delay = delay;
  config.cipher_overhead = cipher_overhead;
  config.nat_lookup_address = nat_lookup_address;
  config.log_record_bytes = log_record_bytes;
  config.validate();
  return config;
}

void ExperimentConfig::validate() const {
  if (n_pages < 1) throw ConfigError("n_pages must be >= 1");
  corpus.validate();
  chain.topology.validate();
  chain.delay.validate();
  if (chain.waf_rule_count < 1 || chain.ids_rule_count < 1 || chain.nat_entry_count < 1)
    throw ConfigError("rule counts must be >= 1");
  collector.validate();
  if (defenses.padding) defenses.padding->validate();
  if (defenses.batching) defenses.batching->validate();
  if (attack.training_visits < 2) throw ConfigError("training_visits must be >= 2");
  if (attack.candidate_cap < 1) throw ConfigError("candidate_cap must be >= 1");
  attack.train.validate();
  if (plan.visits_per_page < 1) throw ConfigError("visits_per_page must be >= 1");
  if (plan.stagger_s < 0.0) throw ConfigError("stagger_s must be >= 0");
}

namespace {

json topology_to_json(const ChainTopology& t) {
  json vnfs = json::array();
  for (const VnfInstance& v : t.vnfs)
    vnfs.push_back(json{{"enclave_id", v.enclave_id}, {"role", vnf_role_name(v.role)}});
  json req = json::array();
  for (VnfRole r : t.request_path) req.push_back(vnf_role_name(r));
  json rsp = json::array();
  for (VnfRole r : t.response_path) rsp.push_back(vnf_role_name(r));
  return json{{"vnfs", std::move(vnfs)},
              {"request_path", std::move(req)},
              {"response_path", std::move(rsp)}};
}

ChainTopology topology_from_json(const json& j) {
  check_keys(j, {"vnfs", "request_path", "response_path"}, "chain.topology");
  ChainTopology t;
  if (j.contains("vnfs")) {
    t.vnfs.clear();
    for (const json& v : j.at("vnfs")) {
      check_keys(v, {"enclave_id", "role"}, "chain.topology.vnfs[]");
      t.vnfs.push_back(VnfInstance{v.at("enclave_id").get<std::uint32_t>(),
                                   vnf_role_from_name(v.at("role").get<std::string>())});
    }
  }
  if (j.contains("request_path")) {
    t.request_path.clear();
    for (const json& r : j.at("request_path"))
      t.request_path.push_back(vnf_role_from_name(r.get<std::string>()));
  }
  if (j.contains("response_path")) {
    t.response_path.clear();
    for (const json& r : j.at("response_path"))
      t.response_path.push_back(vnf_role_from_name(r.get<std::string>()));
  }
  return t;
}

json delay_to_json(const DelayModel& d) {
  return json{{"nat_base", d.nat_base},
              {"waf_base", d.waf_base},
              {"ids_base", d.ids_base},
              {"wanopt_base", d.wanopt_base},
              {"per_rule", d.per_rule},
              {"per_byte", d.per_byte},
              {"per_bit", d.per_bit},
              {"content_scan_cycles", d.content_scan_cycles},
              {"log_write", d.log_write},
              {"batch_verify", d.batch_verify},
              {"pad_copy_per_byte", d.pad_copy_per_byte},
              {"inter_packet_gap", d.inter_packet_gap},
              {"noise_amplitude", d.noise_amplitude}};
}

DelayModel delay_from_json(const json& j) {
  check_keys(j,
             {"nat_base", "waf_base", "ids_base", "wanopt_base", "per_rule", "per_byte",
              "per_bit", "content_scan_cycles", "log_write", "batch_verify",
              "pad_copy_per_byte", "inter_packet_gap", "noise_amplitude"},
             "chain.delay");
  DelayModel d;
  maybe_get(j, "nat_base", d.nat_base);
  maybe_get(j, "waf_base", d.waf_base);
  maybe_get(j, "ids_base", d.ids_base);
  maybe_get(j, "wanopt_base", d.wanopt_base);
  maybe_get(j, "per_rule", d.per_rule);
  maybe_get(j, "per_byte", d.per_byte);
  maybe_get(j, "per_bit", d.per_bit);
  maybe_get(j, "content_scan_cycles", d.content_scan_cycles);
  maybe_get(j, "log_write", d.log_write);
  maybe_get(j, "batch_verify", d.batch_verify);
  maybe_get(j, "pad_copy_per_byte", d.pad_copy_per_byte);
  maybe_get(j, "inter_packet_gap", d.inter_packet_gap);
  maybe_get(j, "noise_amplitude", d.noise_amplitude);
  return d;
}

json corpus_params_to_json(const CorpusParams& p) {
  return json{{"tracked_count", p.tracked_count},
              {"min_objects", p.min_objects},
              {"max_objects", p.max_objects},
              {"min_segments", p.min_segments},
              {"max_segments", p.max_segments},
              {"min_segment_bytes", p.min_segment_bytes},
              {"max_segment_bytes", p.max_segment_bytes},
              {"min_request_bytes", p.min_request_bytes},
              {"max_request_bytes", p.max_request_bytes},
              {"text_probability", p.text_probability},
              {"suspicious_probability", p.suspicious_probability},
              {"loggable_probability", p.loggable_probability},
              {"dynamic_fraction", p.dynamic_fraction},
              {"render_window_s", p.render_window_s}};
}

CorpusParams corpus_params_from_json(const json& j) {
  check_keys(j,
             {"tracked_count", "min_objects", "max_objects", "min_segments", "max_segments",
              "min_segment_bytes", "max_segment_bytes", "min_request_bytes",
              "max_request_bytes", "text_probability", "suspicious_probability",
              "loggable_probability", "dynamic_fraction", "render_window_s"},
             "corpus");
  CorpusParams p;
  maybe_get(j, "tracked_count", p.tracked_count);
  maybe_get(j, "min_objects", p.min_objects);
  maybe_get(j, "max_objects", p.max_objects);
  maybe_get(j, "min_segments", p.min_segments);
  maybe_get(j, "max_segments", p.max_segments);
  maybe_get(j, "min_segment_bytes", p.min_segment_bytes);
  maybe_get(j, "max_segment_bytes", p.max_segment_bytes);
  maybe_get(j, "min_request_bytes", p.min_request_bytes);
  maybe_get(j, "max_request_bytes", p.max_request_bytes);
  maybe_get(j, "text_probability", p.text_probability);
  maybe_get(j, "suspicious_probability", p.suspicious_probability);
  maybe_get(j, "loggable_probability", p.loggable_probability);
  maybe_get(j, "dynamic_fraction", p.dynamic_fraction);
  maybe_get(j, "render_window_s", p.render_window_s);
  return p;
}

json collector_to_json(const CollectorConfig& c) {
  json channels = json::array();
  if (c.enabled_channels & kChannelSequence) channels.push_back("sequence");
  if (c.enabled_channels & kChannelParamSize) channels.push_back("param_size");
  if (c.enabled_channels & kChannelDelay) channels.push_back("delay");
  return json{{"noise_amplitude", c.noise_amplitude},
              {"cycle_scale", c.cycle_scale},
              {"channels", std::move(channels)}};
}

CollectorConfig collector_from_json(const json& j) {
  check_keys(j, {"noise_amplitude", "cycle_scale", "channels"}, "collector");
  CollectorConfig c;
  maybe_get(j, "noise_amplitude", c.noise_amplitude);
  maybe_get(j, "cycle_scale", c.cycle_scale);
  if (j.contains("channels")) {
    c.enabled_channels = 0;
    for (const json& ch : j.at("channels")) {
      const std::string name = ch.get<std::string>();
      if (name == "sequence")
        c.enabled_channels |= kChannelSequence;
      else if (name == "param_size")
        c.enabled_channels |= kChannelParamSize;
      else if (name == "delay")
        c.enabled_channels |= kChannelDelay;
      else
        throw ConfigError("unknown collector channel '" + name + "'");
    }
  }
  return c;
}

json defenses_to_json(const CountermeasureConfig& d) {
  json j;
  if (d.padding) {
    j["padding"] = d.padding->mode == PaddingPolicy::Mode::MaxLen
                       ? json{{"mode", "max_len"}, {"max_bytes", d.padding->max_bytes}}
                       : json{{"mode", "multiple_of"}, {"x_bytes", d.padding->x_bytes}};
  } else {
    j["padding"] = nullptr;
  }
  if (d.batching) {
    j["batching"] = json{{"threshold_n", d.batching->threshold_n},
                         {"flush_on_timeout", d.batching->flush_on_timeout},
                         {"timeout_s", d.batching->timeout_s}};
  } else {
    j["batching"] = nullptr;
  }
  return j;
}

CountermeasureConfig defenses_from_json(const json& j) {
  check_keys(j, {"padding", "batching"}, "defenses");
  CountermeasureConfig d;
  if (j.contains("padding") && !j.at("padding").is_null()) {
    const json& p = j.at("padding");
    check_keys(p, {"mode", "max_bytes", "x_bytes"}, "defenses.padding");
    const std::string mode = p.at("mode").get<std::string>();
    if (mode == "max_len") {
      std::uint64_t max_bytes = 0;  // 0 = size to the corpus
      maybe_get(p, "max_bytes", max_bytes);
      PaddingPolicy policy;
      policy.mode = PaddingPolicy::Mode::MaxLen;
      policy.max_bytes = max_bytes;
      d.padding = policy;
    } else if (mode == "multiple_of") {
      d.padding = PaddingPolicy::multiple_of(p.at("x_bytes").get<std::uint64_t>());
    } else {
      throw ConfigError("padding mode must be 'max_len' or 'multiple_of'");
    }
  }
  if (j.contains("batching") && !j.at("batching").is_null()) {
    const json& b = j.at("batching");
    check_keys(b, {"threshold_n", "flush_on_timeout", "timeout_s"}, "defenses.batching");
    BatchPolicy policy;
    maybe_get(b, "threshold_n", policy.threshold_n);
    maybe_get(b, "flush_on_timeout", policy.flush_on_timeout);
    maybe_get(b, "timeout_s", policy.timeout_s);
    d.batching = policy;
  }
  return d;
}

json train_to_json(const TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate},
              {"epochs", t.epochs},
              {"seed", t.seed},
              {"shuffle_ratio", t.shuffle_ratio},
              {"crosspage_ratio", t.crosspage_ratio},
              {"embed_dim", t.embed_dim},
              {"hidden", t.hidden},
              {"early_stop", t.early_stop},
              {"early_stop_loss", t.early_stop_loss}};
}

TrainConfig train_from_json(const json& j) {
  check_keys(j,
             {"learning_rate", "epochs", "seed", "shuffle_ratio", "crosspage_ratio",
              "embed_dim", "hidden", "early_stop", "early_stop_loss"},
             "attack.train");
  TrainConfig t;
  t.seed = 0;  // 0 derives from the experiment seed
  maybe_get(j, "learning_rate", t.learning_rate);
  maybe_get(j, "epochs", t.epochs);
  maybe_get(j, "seed", t.seed);
  maybe_get(j, "shuffle_ratio", t.shuffle_ratio);
  maybe_get(j, "crosspage_ratio", t.crosspage_ratio);
  maybe_get(j, "embed_dim", t.embed_dim);
  maybe_get(j, "hidden", t.hidden);
  maybe_get(j, "early_stop", t.early_stop);
  maybe_get(j, "early_stop_loss", t.early_stop_loss);
  return t;
}

}  // namespace

ExperimentConfig config_from_json(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config JSON: ") + e.what());
  }
  try {
    check_keys(doc,
               {"seed", "n_pages", "corpus", "chain", "collector", "defenses", "attack",
                "plan", "sweep"},
               "config");
    ExperimentConfig c;
    c.attack.train.seed = 0;
    maybe_get(doc, "seed", c.seed);
    maybe_get(doc, "n_pages", c.n_pages);
    if (doc.contains("corpus")) c.corpus = corpus_params_from_json(doc.at("corpus"));
    if (doc.contains("chain")) {
      const json& j = doc.at("chain");
      check_keys(j,
                 {"topology", "waf_rule_count", "ids_rule_count", "nat_entry_count", "delay",
                  "cipher_overhead", "nat_lookup_address", "log_record_bytes"},
                 "chain");
      if (j.contains("topology")) c.chain.topology = topology_from_json(j.at("topology"));
      maybe_get(j, "waf_rule_count", c.chain.waf_rule_count);
      maybe_get(j, "ids_rule_count", c.chain.ids_rule_count);
      maybe_get(j, "nat_entry_count", c.chain.nat_entry_count);
      if (j.contains("delay")) c.chain.delay = delay_from_json(j.at("delay"));
      maybe_get(j, "cipher_overhead", c.chain.cipher_overhead);
      maybe_get(j, "nat_lookup_address", c.chain.nat_lookup_address);
      maybe_get(j, "log_record_bytes", c.chain.log_record_bytes);
    }
    if (doc.contains("collector")) c.collector = collector_from_json(doc.at("collector"));
    if (doc.contains("defenses")) c.defenses = defenses_from_json(doc.at("defenses"));
    if (doc.contains("attack")) {
      const json& j = doc.at("attack");
      check_keys(j, {"training_visits", "candidate_cap", "profiling_noise", "train"},
                 "attack");
      maybe_get(j, "training_visits", c.attack.training_visits);
      maybe_get(j, "candidate_cap", c.attack.candidate_cap);
      maybe_get(j, "profiling_noise", c.attack.profiling_noise);
      if (j.contains("train")) c.attack.train = train_from_json(j.at("train"));
    }
    if (doc.contains("plan")) {
      const json& j = doc.at("plan");
      check_keys(j, {"visits_per_page", "stagger_s"}, "plan");
      maybe_get(j, "visits_per_page", c.plan.visits_per_page);
      maybe_get(j, "stagger_s", c.plan.stagger_s);
    }
    if (doc.contains("sweep")) {
      const json& j = doc.at("sweep");
      check_keys(j, {"pad_multiples", "include_max_len", "batch_thresholds", "noise_amplitudes"},
                 "sweep");
      maybe_get(j, "pad_multiples", c.sweep.pad_multiples);
      maybe_get(j, "include_max_len", c.sweep.include_max_len);
      maybe_get(j, "batch_thresholds", c.sweep.batch_thresholds);
      maybe_get(j, "noise_amplitudes", c.sweep.noise_amplitudes);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config JSON: ") + e.what());
  }
}

void config_to_json(const ExperimentConfig& c, std::ostream& out) {
  json doc{{"seed", c.seed},
           {"n_pages", c.n_pages},
           {"corpus", corpus_params_to_json(c.corpus)},
           {"chain",
            json{{"topology", topology_to_json(c.chain.topology)},
                 {"waf_rule_count", c.chain.waf_rule_count},
                 {"ids_rule_count", c.chain.ids_rule_count},
                 {"nat_entry_count", c.chain.nat_entry_count},
                 {"delay", delay_to_json(c.chain.delay)},
                 {"cipher_overhead", c.chain.cipher_overhead},
                 {"nat_lookup_address", c.chain.nat_lookup_address},
                 {"log_record_bytes", c.chain.log_record_bytes}}},
           {"collector", collector_to_json(c.collector)},
           {"defenses", defenses_to_json(c.defenses)},
           {"attack",
            json{{"training_visits", c.attack.training_visits},
                 {"candidate_cap", c.attack.candidate_cap},
                 {"profiling_noise", c.attack.profiling_noise},
                 {"train", train_to_json(c.attack.train)}}},
           {"plan",
            json{{"visits_per_page", c.plan.visits_per_page}, {"stagger_s", c.plan.stagger_s}}},
           {"sweep",
            json{{"pad_multiples", c.sweep.pad_multiples},
                 {"include_max_len", c.sweep.include_max_len},
                 {"batch_thresholds", c.sweep.batch_thresholds},
                 {"noise_amplitudes", c.sweep.noise_amplitudes}}}};
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("config write failed");
}

void write_report_json(const MetricsReport& r, std::ostream& out) {
  json doc{{"format", "ISCREPORT 1"},
           {"deterministic",
            json{{"page_accuracy", r.page.accuracy},
                 {"page_recall", r.page.recall},
                 {"page_accuracy_defined", r.page.accuracy_defined},
                 {"page_detections", r.page.detections},
                 {"page_accurate_detections", r.page.accurate_detections},
                 {"tracked_visits", r.page.tracked_visits},
                 {"covered_visits", r.page.covered_visits},
                 {"packet_accuracy", r.packet.accuracy},
                 {"packet_recall", r.packet.recall},
                 {"packet_accuracy_defined", r.packet.accuracy_defined},
                 {"packets_attributed", r.packet.attributed},
                 {"packets_correct", r.packet.correct},
                 {"packets_distinct_correct", r.packet.distinct_correct},
                 {"tracked_packets", r.packet.tracked_packets},
                 {"bandwidth_overhead", r.bandwidth_overhead_frac},
                 {"sim_cycles_per_packet", r.sim_cycles_per_packet},
                 {"total_packets", r.total_packets},
                 {"total_events", r.total_events}}},
           {"runtime",
            json{{"wall_packets_per_second", r.wall_packets_per_second},
                 {"wall_ms", r.wall_ms}}}};
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("report write failed");
}

MetricsReport read_report_json(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("report JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "ISCREPORT 1")
      throw ParseError("unsupported report format");
    const json& d = doc.at("deterministic");
    MetricsReport r;
    r.page.accuracy = d.at("page_accuracy").get<double>();
    r.page.recall = d.at("page_recall").get<double>();
    r.page.accuracy_defined = d.at("page_accuracy_defined").get<bool>();
    r.page.detections = d.at("page_detections").get<std::uint64_t>();
    r.page.accurate_detections = d.at("page_accurate_detections").get<std::uint64_t>();
    r.page.tracked_visits = d.at("tracked_visits").get<std::uint64_t>();
    r.page.covered_visits = d.at("covered_visits").get<std::uint64_t>();
    r.packet.accuracy = d.at("packet_accuracy").get<double>();
    r.packet.recall = d.at("packet_recall").get<double>();
    r.packet.accuracy_defined = d.at("packet_accuracy_defined").get<bool>();
    r.packet.attributed = d.at("packets_attributed").get<std::uint64_t>();
    r.packet.correct = d.at("packets_correct").get<std::uint64_t>();
    r.packet.distinct_correct = d.at("packets_distinct_correct").get<std::uint64_t>();
    r.packet.tracked_packets = d.at("tracked_packets").get<std::uint64_t>();
    r.bandwidth_overhead_frac = d.at("bandwidth_overhead").get<double>();
    r.sim_cycles_per_packet = d.at("sim_cycles_per_packet").get<double>();
    r.total_packets = d.at("total_packets").get<std::uint64_t>();
    r.total_events = d.at("total_events").get<std::uint64_t>();
    const json& rt = doc.at("runtime");
    r.wall_packets_per_second = rt.at("wall_packets_per_second").get<double>();
    r.wall_ms = rt.at("wall_ms").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report JSON: ") + e.what());
  }
}

void write_report_csv(const MetricsReport& r, std::ostream& out) {
  char buf[64];
  out << "metric,value\n";
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%s,%.6f\n", name, v);
    out << buf;
  };
  row("page_accuracy", r.page.accuracy);
  row("page_recall", r.page.recall);
  row("packet_accuracy", r.packet.accuracy);
  row("packet_recall", r.packet.recall);
  row("bandwidth_overhead", r.bandwidth_overhead_frac);
  row("sim_cycles_per_packet", r.sim_cycles_per_packet);
  out << "page_detections," << r.page.detections << '\n';
  out << "tracked_visits," << r.page.tracked_visits << '\n';
  out << "packets_attributed," << r.packet.attributed << '\n';
  out << "tracked_packets," << r.packet.tracked_packets << '\n';
  out << "total_packets," << r.total_packets << '\n';
  out << "total_events," << r.total_events << '\n';
  if (!out) throw IoError("report csv write failed");
}

std::string report_summary(const MetricsReport& r) {
  std::ostringstream out;
  char buf[160];
  out << "interface side-channel lab report\n";
  std::snprintf(buf, sizeof buf, "  packets processed ........ %llu (%llu interface events)\n",
                static_cast<unsigned long long>(r.total_packets),
                static_cast<unsigned long long>(r.total_events));
  out << buf;
  std::snprintf(buf, sizeof buf, "  page detections .......... %llu (%llu accurate)\n",
                static_cast<unsigned long long>(r.page.detections),
                static_cast<unsigned long long>(r.page.accurate_detections));
  out << buf;
  if (r.page.accuracy_defined)
    std::snprintf(buf, sizeof buf, "  page accuracy / recall ... %.3f / %.3f\n",
                  r.page.accuracy, r.page.recall);
  else
    std::snprintf(buf, sizeof buf, "  page accuracy / recall ... n/a (no detections) / %.3f\n",
                  r.page.recall);
  out << buf;
  if (r.packet.accuracy_defined)
    std::snprintf(buf, sizeof buf, "  packet accuracy / recall . %.3f / %.3f\n",
                  r.packet.accuracy, r.packet.recall);
  else
    std::snprintf(buf, sizeof buf,
                  "  packet accuracy / recall . n/a (no attributions) / %.3f\n",
                  r.packet.recall);
  out << buf;
  std::snprintf(buf, sizeof buf, "  bandwidth overhead ....... %.2f%%\n",
                100.0 * r.bandwidth_overhead_frac);
  out << buf;
  std::snprintf(buf, sizeof buf, "  simulated cycles/packet .. %.1f\n", r.sim_cycles_per_packet);
  out << buf;
  std::snprintf(buf, sizeof buf, "  wall throughput .......... %.0f packets/s (%.1f ms)\n",
                r.wall_packets_per_second, r.wall_ms);
  out << buf;
  return out.str();
}

std::vector<VisitPlanEntry> build_visit_plan(const Corpus& corpus, const VisitPlanParams& plan,
                                             std::uint64_t seed) {
  std::vector<std::uint32_t> slots;
  for (const WebPageSpec& page : corpus.pages)
    for (std::uint32_t r = 0; r < plan.visits_per_page; ++r) slots.push_back(page.page_id);
  SplitMix64 rng(derive_seed(seed, "plan-shuffle"));
  rng.shuffle(slots);

  std::vector<VisitPlanEntry> entries;
  entries.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i)
    entries.push_back(VisitPlanEntry{slots[i], static_cast<double>(i) * plan.stagger_s});
  return entries;
}

std::vector<GroundTruthVisit> ground_truth_visits(const Corpus& corpus,
                                                  const std::vector<VisitPlanEntry>& plan,
                                                  const SessionStream& session) {
  std::vector<GroundTruthVisit> visits(plan.size());
  for (std::size_t v = 0; v < plan.size(); ++v) {
    visits[v].page_id = plan[v].page_id;
    visits[v].tracked = std::binary_search(corpus.tracked_ids.begin(), corpus.tracked_ids.end(),
                                           plan[v].page_id);
    visits[v].start = plan[v].start_time;
    visits[v].end = plan[v].start_time;
  }
  for (const PacketGroundTruth& p : session.packets) {
    const std::size_t v = static_cast<std::size_t>(p.packet_uid >> 24);
    if (v >= visits.size()) throw ContractError("packet uid does not map to a planned visit");
    visits[v].uids.insert(p.packet_uid);
    visits[v].start = std::min(visits[v].start, p.arrival_time);
    visits[v].end = std::max(visits[v].end, p.arrival_time);
  }
  return visits;
}

PaddingPolicy resolve_padding(const PaddingPolicy& policy, const Corpus& corpus,
                              std::uint64_t log_record_bytes) {
  PaddingPolicy resolved = policy;
  const std::uint64_t needed = std::max(corpus.max_payload_bytes(), log_record_bytes);
  if (resolved.mode == PaddingPolicy::Mode::MaxLen) {
    if (resolved.max_bytes == 0) resolved.max_bytes = needed;
    if (resolved.max_bytes < needed)
      throw ConfigError("MaxLen target " + std::to_string(resolved.max_bytes) +
                        " is below the largest corpus payload " + std::to_string(needed));
  }
  resolved.validate();
  return resolved;
}

void write_detections_csv(std::span<const RecognitionEvent> detections, std::ostream& out) {
  out << "detection_time,page_id,r_before,entries_attributed\n";
  char line[96];
  for (const RecognitionEvent& e : detections) {
    std::snprintf(line, sizeof line, "%.6f,%u,%.6f,%zu\n", e.detection_time, e.page_id,
                  e.r_before, e.attributed.size());
    out << line;
  }
  if (!out) throw IoError("detections write failed");
}

OfflineState run_offline(const ExperimentConfig& config) {
  config.validate();
  OfflineState state;
  state.corpus = stage("corpus", [&] {
    return generate_corpus(config.seed, config.n_pages, config.corpus);
  });

  stage("profiling", [&] {
    // The attacker's replica platform: same chain build, no countermeasures,
    // per-packet delivery, noise only as configured for the replica.
    ChainConfig replica = config.chain.materialize(config.seed);
    replica.delay.noise_amplitude = config.attack.profiling_noise;

    const std::vector<std::uint32_t>& tracked = state.corpus.tracked_ids;
    state.profiles.resize(tracked.size());
    parallel_for(tracked.size(), [&](std::size_t i) {
      const WebPageSpec& page = state.corpus.page(tracked[i]);
      CollectorConfig observer;
      observer.noise_amplitude = config.attack.profiling_noise;
      Collector collector(nullptr, observer,
                          derive_seed(config.seed, "profile-observer", page.page_id));
      ServiceChain chain(replica, &collector,
                         derive_seed(config.seed, "profile-chain", page.page_id));
      collector.set_clock(&chain.clock());
      const std::vector<VisitObservation> visits = collect_visits(
          page, state.corpus.params, chain, collector, config.attack.training_visits,
          config.seed);
      state.profiles[i] = build_profile(page.page_id, visits);
    });
    return 0;
  });

  stage("classifier-training", [&] {
    TrainConfig train_config = config.attack.train;
    if (train_config.seed == 0) train_config.seed = derive_seed(config.seed, "train-root");
    state.classifiers.resize(state.profiles.size());
    parallel_for(state.profiles.size(), [&](std::size_t i) {
      state.classifiers[i] = train(state.profiles[i], train_config, state.profiles);
    });
    return 0;
  });
  return state;
}

OnlineRun run_online(const ExperimentConfig& config, const OfflineState& offline) {
  OnlineRun run;
  run.plan = build_visit_plan(offline.corpus, config.plan, derive_seed(config.seed, "plan"));
  run.session =
      interleave_sessions(offline.corpus, run.plan, derive_seed(config.seed, "session"));

  std::optional<PaddingPolicy> padding;
  if (config.defenses.padding)
    padding = resolve_padding(*config.defenses.padding, offline.corpus,
                              config.chain.log_record_bytes);
  const PaddingPolicy* pad = padding ? &*padding : nullptr;

  const ChainConfig chain_config = config.chain.materialize(config.seed);
  Collector collector(nullptr, config.collector, derive_seed(config.seed, "online-observer"));
  ServiceChain chain(chain_config, &collector, derive_seed(config.seed, "online-chain"));
  collector.set_clock(&chain.clock());

  std::vector<PageProfile> profiles = offline.profiles;
  std::vector<RecurrentParams> classifiers;
  classifiers.reserve(offline.classifiers.size());
  for (const TrainResult& t : offline.classifiers) classifiers.push_back(t.params);
  RecognitionConfig recognition;
  recognition.candidate_cap = config.attack.candidate_cap;
  RecognitionEngine engine(std::move(profiles), std::move(classifiers), recognition);

  const auto wall_start = std::chrono::steady_clock::now();
  collector.begin_trace();

  auto ingest_segment = [&](std::size_t from_event, double arrival, std::uint64_t uid) {
    const std::span<const InterfaceEvent> all = collector.pending_events();
    std::vector<PacketFeatureVector> fvs =
        extract_packet_features(all.subspan(from_event), chain_config.topology);
    for (PacketFeatureVector& fv : fvs) {
      std::vector<RecognitionEvent> events =
          engine.ingest(TimedFeature{std::move(fv), arrival, uid});
      run.detections.insert(run.detections.end(), std::make_move_iterator(events.begin()),
                            std::make_move_iterator(events.end()));
    }
  };

  stage("online-replay", [&] {
    if (config.defenses.batching) {
      chain.set_batch_threshold(config.defenses.batching->threshold_n);
      BatchGate gate(*config.defenses.batching);
      auto handle = [&](const Batch& batch, double release_time) {
        const std::size_t before = collector.pending_events().size();
        chain.process_batch(batch, pad);
        ingest_segment(before, release_time, kUnknownUid);
      };
      for (const PacketGroundTruth& p : run.session.packets)
        if (std::optional<Batch> batch = gate.push(p)) handle(*batch, p.arrival_time);
      const double end_time =
          run.session.packets.empty() ? 0.0 : run.session.packets.back().arrival_time;
      if (std::optional<Batch> batch = gate.flush()) handle(*batch, end_time);
    } else {
      for (const PacketGroundTruth& p : run.session.packets) {
        const std::size_t before = collector.pending_events().size();
        chain.process_packet(p, pad);
        ingest_segment(before, p.arrival_time, p.packet_uid);
      }
    }
    return 0;
  });

  run.trace = collector.finalize();
  const auto wall_end = std::chrono::steady_clock::now();

  stage("metrics", [&] {
    const std::vector<GroundTruthVisit> visits =
        ground_truth_visits(offline.corpus, run.plan, run.session);
    std::map<std::uint64_t, std::uint32_t> uid_to_page;
    std::set<std::uint32_t> tracked(offline.corpus.tracked_ids.begin(),
                                    offline.corpus.tracked_ids.end());
    std::uint64_t tracked_packets = 0;
    for (const PacketGroundTruth& p : run.session.packets) {
      uid_to_page.emplace(p.packet_uid, p.page_id);
      if (tracked.count(p.page_id)) ++tracked_packets;
    }
    run.report.page = page_metrics(run.detections, visits);
    run.report.packet = packet_metrics(run.detections, uid_to_page, tracked_packets);
    run.report.bandwidth_overhead_frac =
        padding ? bandwidth_overhead(offline.corpus, *padding, config.chain.cipher_overhead)
                : 0.0;
    run.report.total_packets = run.session.packets.size();
    run.report.total_events = run.trace.size();
    run.report.sim_cycles_per_packet =
        static_cast<double>(chain.clock().now()) /
        static_cast<double>(std::max<std::size_t>(1, run.session.packets.size()));
    const double wall_s =
        std::chrono::duration<double>(wall_end - wall_start).count();
    run.report.wall_ms = wall_s * 1000.0;
    run.report.wall_packets_per_second =
        wall_s > 0.0 ? static_cast<double>(run.session.packets.size()) / wall_s : 0.0;
    return 0;
  });
  return run;
}

MetricsReport run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    auto f = open_out(out_dir / "config.json");
    config_to_json(config, f);
  }

  const OfflineState offline = run_offline(config);
  stage("persist-offline", [&] {
    {
      auto f = open_out(out_dir / "corpus.json");
      write_corpus_json(offline.corpus, f);
    }
    {
      auto f = open_out(out_dir / "profiles.json");
      write_profiles_json(offline.profiles, f);
    }
    fs::create_directories(out_dir / "params");
    for (std::size_t i = 0; i < offline.classifiers.size(); ++i) {
      auto f = open_out(out_dir / "params" /
                        ("page_" + std::to_string(offline.profiles[i].page_id) + ".iscnet"));
      write_params(offline.classifiers[i].params, offline.profiles[i].page_id, f);
    }
    return 0;
  });

  OnlineRun run = run_online(config, offline);
  stage("persist-online", [&] {
    {
      auto f = open_out(out_dir / "session.csv");
      write_session_csv(run.session, f);
    }
    {
      auto f = open_out(out_dir / "trace.isctrace");
      write_trace(run.trace, f);
    }
    {
      auto f = open_out(out_dir / "detections.csv");
      write_detections_csv(run.detections, f);
    }
    {
      auto f = open_out(out_dir / "report.json");
      write_report_json(run.report, f);
    }
    {
      auto f = open_out(out_dir / "report.csv");
      write_report_csv(run.report, f);
    }
    {
      auto f = open_out(out_dir / "summary.txt");
      f << report_summary(run.report);
    }
    return 0;
  });
  return run.report;
}

std::vector<SweepRow> run_defense_sweep(const ExperimentConfig& config,
                                        const OfflineState& offline) {
  std::vector<SweepRow> rows;
  auto run_with = [&](const CountermeasureConfig& defenses, std::uint64_t noise) {
    ExperimentConfig c = config;
    c.defenses = defenses;
    c.chain.delay.noise_amplitude = noise;
    c.collector.noise_amplitude = noise;
    return run_online(c, offline).report;
  };

  for (std::uint32_t n : config.sweep.batch_thresholds) {
    CountermeasureConfig base;
    if (n > 1) {
      BatchPolicy policy;
      policy.threshold_n = n;
      base.batching = policy;
    }
    SweepRow none;
    none.batch_n = n;
    none.report = run_with(base, 0);
    rows.push_back(std::move(none));

    for (std::uint64_t x : config.sweep.pad_multiples) {
      CountermeasureConfig d = base;
      d.padding = PaddingPolicy::multiple_of(x);
      SweepRow row;
      row.padding = "multiple_of";
      row.pad_bytes = x;
      row.batch_n = n;
      row.report = run_with(d, 0);
      rows.push_back(std::move(row));
    }
    if (config.sweep.include_max_len) {
      CountermeasureConfig d = base;
      d.padding = PaddingPolicy::max_len(0);  // sized to the corpus
      const PaddingPolicy resolved =
          resolve_padding(*d.padding, offline.corpus, config.chain.log_record_bytes);
      SweepRow row;
      row.padding = "max_len";
      row.pad_bytes = resolved.max_bytes;
      row.batch_n = n;
      row.report = run_with(d, 0);
      rows.push_back(std::move(row));
    }
  }

  for (std::uint64_t amplitude : config.sweep.noise_amplitudes) {
    SweepRow row;
    row.noise_amplitude = amplitude;
    row.report = run_with(CountermeasureConfig{}, amplitude);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "padding,pad_bytes,batch_n,noise_amplitude,page_accuracy,page_recall,"
         "packet_accuracy,packet_recall,bandwidth_overhead,sim_cycles_per_packet,"
         "detections\n";
  char line[256];
  for (const SweepRow& row : rows) {
    std::snprintf(line, sizeof line, "%s,%llu,%u,%llu,%.6f,%.6f,%.6f,%.6f,%.6f,%.1f,%llu\n",
                  row.padding.c_str(), static_cast<unsigned long long>(row.pad_bytes),
                  row.batch_n, static_cast<unsigned long long>(row.noise_amplitude),
                  row.report.page.accuracy, row.report.page.recall,
                  row.report.packet.accuracy, row.report.packet.recall,
                  row.report.bandwidth_overhead_frac, row.report.sim_cycles_per_packet,
                  static_cast<unsigned long long>(row.report.page.detections));
    out << line;
  }
  if (!out) throw IoError("sweep csv write failed");
}

}  // namespace isclab
