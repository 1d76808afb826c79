#include <benchmark/benchmark.h>

#include "isclab/chain.hpp"
#include "isclab/corpus.hpp"

using namespace isclab;

namespace {

ChainConfig bench_config(std::size_t ids_rules) {
  ChainConfig config;
  config.rules = generate_ruleset(5, 1000, ids_rules, 256);
  return config;
}

std::vector<PacketGroundTruth> bench_stream(std::size_t n) {
  CorpusParams params;
  params.tracked_count = 1;
  params.suspicious_probability = 0.1;
  params.loggable_probability = 0.1;
  const Corpus corpus = generate_corpus(9, 20, params);
  std::vector<VisitPlanEntry> plan;
  for (std::uint32_t v = 0; plan.size() * 30 < n; ++v)
    plan.push_back(VisitPlanEntry{v % 20, 0.1 * v});
  std::vector<PacketGroundTruth> packets = interleave_sessions(corpus, plan, 3).packets;
  packets.resize(std::min(packets.size(), n));
  return packets;
}

void process_stream(benchmark::State& state, const PaddingPolicy* padding,
                    std::uint32_t batch_n) {
  const std::size_t ids_rules = static_cast<std::size_t>(state.range(0));
  const auto packets = bench_stream(4096);
  ChainConfig config = bench_config(ids_rules);
  ServiceChain chain(config, nullptr, 7);
  std::uint64_t processed = 0;

  for (auto _ : state) {
    if (batch_n <= 1) {
      for (const PacketGroundTruth& p : packets)
        benchmark::DoNotOptimize(chain.process_packet(p, padding));
      processed += packets.size();
    } else {
      chain.set_batch_threshold(batch_n);
      Batch batch;
      std::uint64_t seq = 0;
      for (const PacketGroundTruth& p : packets) {
        batch.packets.push_back(p);
        if (batch.packets.size() == batch_n) {
          batch.batch_seq = seq++;
          benchmark::DoNotOptimize(chain.process_batch(batch, padding));
          processed += batch.packets.size();
          batch.packets.clear();
        }
      }
      chain.reset(7);
    }
  }
  state.SetItemsProcessed(static_cast<int64_t>(processed));
}

void BM_chain_undefended(benchmark::State& state) { process_stream(state, nullptr, 1); }

void BM_chain_padded(benchmark::State& state) {
  const PaddingPolicy policy = PaddingPolicy::multiple_of(600);
  process_stream(state, &policy, 1);
}

void BM_chain_batched(benchmark::State& state) { process_stream(state, nullptr, 8); }

void BM_chain_padded_batched(benchmark::State& state) {
  const PaddingPolicy policy = PaddingPolicy::multiple_of(600);
  process_stream(state, &policy, 8);
}

}  // namespace

BENCHMARK(BM_chain_undefended)->Arg(1000)->Arg(3000)->Arg(5000);
BENCHMARK(BM_chain_padded)->Arg(3000);
BENCHMARK(BM_chain_batched)->Arg(3000);
BENCHMARK(BM_chain_padded_batched)->Arg(3000);

BENCHMARK_MAIN();
