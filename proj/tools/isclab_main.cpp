// isclab - drives the SGX-assisted service-chain side-channel lab from the
// command line: corpus generation, trace collection, profiling, classifier
// training, the end-to-end attack and countermeasure sweeps.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "isclab/errors.hpp"
#include "isclab/experiment.hpp"

namespace fs = std::filesystem;
using namespace isclab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitStageFailure = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config file (JSON)");
  cmd->add_option("--seed", opts.seed, "Master seed, overrides the config");
  cmd->add_option("--out", opts.out_dir, "Output directory");
}

ExperimentConfig load_config(const CommonOptions& opts) {
  ExperimentConfig config;
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw ConfigError("cannot read config file " + opts.config_path);
    config = config_from_json(in);
  }
  if (opts.seed) config.seed = *opts.seed;
  config.validate();
  return config;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

int cmd_corpus_gen(const CommonOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  const Corpus corpus = generate_corpus(config.seed, config.n_pages, config.corpus);
  auto f = open_out(fs::path(opts.out_dir) / "corpus.json");
  write_corpus_json(corpus, f);
  std::cout << "corpus: " << corpus.pages.size() << " pages, " << corpus.tracked_ids.size()
            << " tracked, seed " << corpus.seed << " -> " << opts.out_dir << "/corpus.json\n";
  return kExitOk;
}

int cmd_trace_run(const CommonOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  // Replay only: an empty profile set keeps the recognition engine silent.
  OfflineState offline;
  offline.corpus = generate_corpus(config.seed, config.n_pages, config.corpus);
  const OnlineRun run = run_online(config, offline);
  {
    auto f = open_out(fs::path(opts.out_dir) / "session.csv");
    write_session_csv(run.session, f);
  }
  {
    auto f = open_out(fs::path(opts.out_dir) / "trace.isctrace");
    write_trace(run.trace, f);
  }
  std::cout << "trace: " << run.session.packets.size() << " packets, " << run.trace.size()
            << " events -> " << opts.out_dir << "/trace.isctrace\n";
  return kExitOk;
}

std::vector<PageProfile> load_or_build_profiles(const ExperimentConfig& config,
                                                const CommonOptions& opts, Corpus* corpus_out) {
  const fs::path profile_path = fs::path(opts.out_dir) / "profiles.json";
  *corpus_out = generate_corpus(config.seed, config.n_pages, config.corpus);
  if (fs::exists(profile_path)) {
    std::ifstream in(profile_path);
    if (!in) throw IoError("cannot read " + profile_path.string());
    std::cout << "profiles: loading " << profile_path.string() << '\n';
    return read_profiles_json(in);
  }
  OfflineState offline = run_offline(config);
  *corpus_out = std::move(offline.corpus);
  return std::move(offline.profiles);
}

int cmd_profile_build(const CommonOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  // run_offline also trains classifiers; zero epochs keeps this cheap.
  ExperimentConfig profiling_only = config;
  profiling_only.attack.train.epochs = 0;
  const OfflineState offline = run_offline(profiling_only);
  {
    auto f = open_out(fs::path(opts.out_dir) / "corpus.json");
    write_corpus_json(offline.corpus, f);
  }
  auto f = open_out(fs::path(opts.out_dir) / "profiles.json");
  write_profiles_json(offline.profiles, f);
  std::cout << "profiles: " << offline.profiles.size() << " tracked pages -> " << opts.out_dir
            << "/profiles.json\n";
  return kExitOk;
}

int cmd_classifier_train(const CommonOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  Corpus corpus;
  const std::vector<PageProfile> profiles = load_or_build_profiles(config, opts, &corpus);

  TrainConfig train_config = config.attack.train;
  if (train_config.seed == 0) train_config.seed = derive_seed(config.seed, "train-root");

  const fs::path params_dir = fs::path(opts.out_dir) / "params";
  fs::create_directories(params_dir);
  std::size_t converged = 0;
  for (const PageProfile& profile : profiles) {
    const TrainResult result = train(profile, train_config, profiles);
    if (result.converged) ++converged;
    auto f = open_out(params_dir / ("page_" + std::to_string(profile.page_id) + ".iscnet"));
    write_params(result.params, profile.page_id, f);
  }
  std::cout << "classifiers: " << profiles.size() << " trained (" << converged
            << " converged) -> " << params_dir.string() << '\n';
  return kExitOk;
}

int cmd_attack_run(const CommonOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  const MetricsReport report = run_experiment(config, opts.out_dir);
  std::cout << report_summary(report);
  return kExitOk;
}

int cmd_defend_sweep(const CommonOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  const OfflineState offline = run_offline(config);
  const std::vector<SweepRow> rows = run_defense_sweep(config, offline);
  auto f = open_out(fs::path(opts.out_dir) / "sweep.csv");
  write_sweep_csv(rows, f);
  std::cout << "sweep: " << rows.size() << " settings -> " << opts.out_dir << "/sweep.csv\n";
  return kExitOk;
}

int cmd_report(const CommonOptions& opts) {
  const fs::path report_path = fs::path(opts.out_dir) / "report.json";
  std::ifstream in(report_path);
  if (!in) throw ConfigError("no report at " + report_path.string() + "; run 'attack run' first");
  const MetricsReport report = read_report_json(in);
  std::cout << report_summary(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interface side-channel laboratory for SGX-assisted service chains"};
  app.require_subcommand(1);

  CommonOptions opts;
  int (*handler)(const CommonOptions&) = nullptr;

  auto* corpus = app.add_subcommand("corpus", "Corpus operations")->require_subcommand(1);
  auto* corpus_gen = corpus->add_subcommand("gen", "Generate a synthetic web-page corpus");
  add_common(corpus_gen, opts);
  corpus_gen->callback([&] { handler = cmd_corpus_gen; });

  auto* trace = app.add_subcommand("trace", "Trace operations")->require_subcommand(1);
  auto* trace_run = trace->add_subcommand("run", "Replay a session and record the trace");
  add_common(trace_run, opts);
  trace_run->callback([&] { handler = cmd_trace_run; });

  auto* profile = app.add_subcommand("profile", "Profiling operations")->require_subcommand(1);
  auto* profile_build = profile->add_subcommand("build", "Build per-page profiling sets");
  add_common(profile_build, opts);
  profile_build->callback([&] { handler = cmd_profile_build; });

  auto* classifier =
      app.add_subcommand("classifier", "Classifier operations")->require_subcommand(1);
  auto* classifier_train =
      classifier->add_subcommand("train", "Train per-page sequence classifiers");
  add_common(classifier_train, opts);
  classifier_train->callback([&] { handler = cmd_classifier_train; });

  auto* attack = app.add_subcommand("attack", "Attack operations")->require_subcommand(1);
  auto* attack_run = attack->add_subcommand("run", "Run the full experiment pipeline");
  add_common(attack_run, opts);
  attack_run->callback([&] { handler = cmd_attack_run; });

  auto* defend = app.add_subcommand("defend", "Countermeasure operations")->require_subcommand(1);
  auto* defend_sweep = defend->add_subcommand("sweep", "Sweep countermeasure settings");
  add_common(defend_sweep, opts);
  defend_sweep->callback([&] { handler = cmd_defend_sweep; });

  auto* report = app.add_subcommand("report", "Print the report of a finished run");
  add_common(report, opts);
  report->callback([&] { handler = cmd_report; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    return handler ? handler(opts) : kExitConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStageFailure;
  }
}
