#include <benchmark/benchmark.h>

#include "isclab/nat_trie.hpp"
#include "isclab/rng.hpp"

using namespace isclab;

namespace {

std::vector<NatEntry> random_table(std::size_t n) {
  SplitMix64 rng(11);
  std::vector<NatEntry> entries{NatEntry{0, 0, 0}};
  for (std::size_t i = 1; i < n; ++i) {
    NatEntry e;
    e.prefix_len = static_cast<std::uint8_t>(rng.range(8, 28));
    const std::uint32_t mask = ~std::uint32_t{0} << (32 - e.prefix_len);
    e.prefix = static_cast<std::uint32_t>(rng.next()) & mask;
    e.translation = static_cast<std::uint32_t>(rng.next());
    entries.push_back(e);
  }
  return entries;
}

void BM_trie_lookup(benchmark::State& state) {
  const auto entries = random_table(static_cast<std::size_t>(state.range(0)));
  const NatTrie trie(entries);
  SplitMix64 rng(3);
  for (auto _ : state)
    benchmark::DoNotOptimize(trie.lookup(static_cast<std::uint32_t>(rng.next())));
  state.SetItemsProcessed(state.iterations());
}

void BM_linear_scan_lookup(benchmark::State& state) {
  const auto entries = random_table(static_cast<std::size_t>(state.range(0)));
  SplitMix64 rng(3);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        linear_scan_lookup(entries, static_cast<std::uint32_t>(rng.next())));
  state.SetItemsProcessed(state.iterations());
}

}  // namespace

BENCHMARK(BM_trie_lookup)->Arg(256)->Arg(1024)->Arg(8192);
BENCHMARK(BM_linear_scan_lookup)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
