#include <benchmark/benchmark.h>

#include "isclab/lstm.hpp"
#include "isclab/rng.hpp"

using namespace isclab;

namespace {

std::vector<std::uint32_t> random_tokens(std::size_t len, std::uint32_t vocab,
                                         std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::uint32_t> tokens;
  for (std::size_t i = 0; i < len; ++i)
    tokens.push_back(static_cast<std::uint32_t>(rng.below(vocab)));
  return tokens;
}

void BM_lstm_forward(benchmark::State& state) {
  const std::uint32_t vocab = 32;
  const RecurrentParams params = RecurrentParams::seeded(vocab, 8, 16, 5);
  const auto tokens = random_tokens(static_cast<std::size_t>(state.range(0)), vocab, 7);
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, tokens));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_lstm_epoch(benchmark::State& state) {
  const std::uint32_t vocab = 32;
  RecurrentParams params = RecurrentParams::seeded(vocab, 8, 16, 5);
  std::vector<SequenceSample> batch;
  for (std::uint64_t s = 0; s < 40; ++s)
    batch.push_back(SequenceSample{random_tokens(30, vocab, s), s % 2 == 0});
  for (auto _ : state) {
    const LossGrad lg = loss_and_grad(params, batch);
    params.axpy(-0.25, lg.grad);
    benchmark::DoNotOptimize(params.readout_b);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch.size()));
}

}  // namespace

BENCHMARK(BM_lstm_forward)->Arg(10)->Arg(30)->Arg(100);
BENCHMARK(BM_lstm_epoch);

BENCHMARK_MAIN();
