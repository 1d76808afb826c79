#include <doctest.h>

#include <map>
#include <set>

#include "helpers.hpp"
#include "isclab/cipher.hpp"
#include "isclab/countermeasures.hpp"
#include "isclab/errors.hpp"

using namespace isclab;
using namespace isclab::testing;

TEST_CASE("n=1 batching is the identity") {
  BatchPolicy policy;
  policy.threshold_n = 1;
  BatchGate gate(policy);
  for (int i = 0; i < 5; ++i) {
    const auto batch = gate.push(make_packet(1, 0, PacketKind::Request, 200));
    REQUIRE(batch.has_value());
    CHECK(batch->packets.size() == 1);
    CHECK(batch->dummy_count == 0);
  }
  CHECK_FALSE(gate.flush().has_value());
}

TEST_CASE("10 packets at n=4 batch as 4,4,2+2 dummies") {
  BatchPolicy policy;
  policy.threshold_n = 4;
  BatchGate gate(policy);
  std::vector<Batch> batches;
  for (int i = 0; i < 10; ++i)
    if (auto b = gate.push(make_packet(1, 0, PacketKind::Request, 200, false, false, 0.1 * i)))
      batches.push_back(std::move(*b));
  REQUIRE(batches.size() == 2);
  const auto flushed = gate.flush();
  REQUIRE(flushed.has_value());
  CHECK(flushed->packets.size() == 4);
  CHECK(flushed->dummy_count == 2);
  int dummies = 0;
  for (const PacketGroundTruth& p : flushed->packets)
    if (p.dummy) {
      ++dummies;
      CHECK(p.page_id == kDummyPageId);
    }
  CHECK(dummies == 2);
}

TEST_CASE("verifier accepts full in-order batches only") {
  BatchVerifier verifier(4);
  Batch full;
  full.batch_seq = 0;
  full.packets.resize(4);
  CHECK(verifier.verify(full));

  Batch replay = full;  // same tag again
  CHECK_FALSE(verifier.verify(replay));

  Batch second;
  second.batch_seq = 1;
  second.packets.resize(3);  // n-1 packets
  CHECK_FALSE(verifier.verify(second));
  second.packets.resize(4);
  CHECK(verifier.verify(second));
}

TEST_CASE("rejected batches are dropped after a bounce event") {
  ChainFixture fx;
  fx.chain->set_batch_threshold(4);
  fx.collector->begin_trace();
  Batch replayed;
  replayed.batch_seq = 7;  // verifier expects 0
  for (int i = 0; i < 4; ++i)
    replayed.packets.push_back(make_packet(1, i, PacketKind::Request, 300));
  const BatchOutput out = fx.chain->process_batch(replayed);
  CHECK_FALSE(out.accepted);
  CHECK(out.released.empty());
  const Trace trace = fx.collector->finalize();
  REQUIRE(trace.size() == 2);
  CHECK(trace[0].direction == Direction::Ecall);
  CHECK(trace[1].direction == Direction::Ocall);
  CHECK(trace[1].param_bytes == 0);
}

TEST_CASE("batch traces contain only batch-level events") {
  ChainFixture fx;
  const std::uint32_t n = 8;
  fx.chain->set_batch_threshold(n);
  BatchPolicy policy;
  policy.threshold_n = n;
  BatchGate gate(policy);

  fx.collector->begin_trace();
  int batches = 0;
  for (int i = 0; i < 32; ++i) {
    const auto batch = gate.push(make_packet(2, i % 5,
                                             i % 2 ? PacketKind::Request
                                                   : PacketKind::ResponseSegment,
                                             200 + 13 * i, i % 4 == 0, i % 6 == 0));
    if (batch) {
      ++batches;
      CHECK(fx.chain->process_batch(*batch).accepted);
    }
  }
  const Trace trace = fx.collector->finalize();
  CHECK(batches == 4);
  // One ECALL per VNF stage per batch: no per-packet E/O alternation.
  std::size_t ecalls = 0;
  for (const InterfaceEvent& e : trace)
    if (e.direction == Direction::Ecall) ++ecalls;
  CHECK(ecalls == batches * fx.config.topology.vnfs.size());
}

TEST_CASE("within-batch release order is uniformly random per position") {
  ChainConfig config = small_chain_config();
  ServiceChain chain(config, nullptr, 1234);
  const std::uint32_t n = 4;
  chain.set_batch_threshold(n);

  // position_counts[input][output]
  std::vector<std::vector<int>> counts(n, std::vector<int>(n, 0));
  const int kBatches = 4000;
  for (int b = 0; b < kBatches; ++b) {
    Batch batch;
    batch.batch_seq = static_cast<std::uint64_t>(b);
    for (std::uint32_t i = 0; i < n; ++i) {
      PacketGroundTruth p = make_packet(1, i, PacketKind::Request, 300);
      p.packet_uid = i;
      batch.packets.push_back(p);
    }
    const BatchOutput out = chain.process_batch(batch);
    REQUIRE(out.released.size() == n);
    for (std::uint32_t pos = 0; pos < n; ++pos)
      ++counts[out.released[pos].packet_uid][pos];
  }
  // Each cell is Binomial(kBatches, 1/4): mean 1000, sigma ~27.4.
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < n; ++j)
      CHECK(std::abs(counts[i][j] - kBatches / 4) <= 4 * 28);
}

TEST_CASE("padded param sizes collapse to the policy's value set") {
  ChainFixture fx;
  CorpusParams params;
  params.tracked_count = 1;
  params.suspicious_probability = 0.3;
  params.loggable_probability = 0.3;
  const Corpus corpus = generate_corpus(3, 10, params);
  std::vector<VisitPlanEntry> plan;
  for (const WebPageSpec& p : corpus.pages) plan.push_back({p.page_id, 0.0});
  const SessionStream session = interleave_sessions(corpus, plan, 4);
  const std::uint64_t max_payload = corpus.max_payload_bytes();

  auto observed_sizes = [&](const PaddingPolicy& policy) {
    ChainFixture run(small_chain_config(), CollectorConfig{}, 5);
    run.collector->begin_trace();
    for (const PacketGroundTruth& p : session.packets) run.chain->process_packet(p, &policy);
    std::set<std::uint64_t> sizes;
    for (const InterfaceEvent& e : run.collector->finalize()) sizes.insert(e.param_bytes);
    return sizes;
  };

  const PaddingPolicy max_len = PaddingPolicy::max_len(max_payload);
  CHECK(observed_sizes(max_len).size() == 1);

  for (std::uint64_t x : {200ull, 500ull}) {
    const auto sizes = observed_sizes(PaddingPolicy::multiple_of(x));
    CHECK(sizes.size() <= max_payload / x + 1);
    for (std::uint64_t s : sizes) {
      // every observed size is the ciphertext of some multiple of x
      const std::uint64_t plain = s - kDefaultCipherOverhead;
      CHECK(plain % 16 == 0);
    }
  }
}

TEST_CASE("defended processing keeps per-packet decisions intact") {
  CorpusParams params;
  params.tracked_count = 1;
  params.suspicious_probability = 0.4;
  params.loggable_probability = 0.4;
  const Corpus corpus = generate_corpus(8, 6, params);
  std::vector<VisitPlanEntry> plan;
  for (const WebPageSpec& p : corpus.pages) plan.push_back({p.page_id, 0.0});
  const SessionStream session = interleave_sessions(corpus, plan, 4);

  const ChainConfig config = small_chain_config();
  ServiceChain undefended(config, nullptr, 5);
  ServiceChain defended(config, nullptr, 5);
  const std::uint32_t n = 8;
  defended.set_batch_threshold(n);
  const PaddingPolicy padding = PaddingPolicy::max_len(corpus.max_payload_bytes());

  std::map<std::uint64_t, PacketFeatureVector> undefended_fv;
  for (const PacketGroundTruth& p : session.packets)
    undefended_fv.emplace(p.packet_uid, undefended.process_packet(p));

  BatchPolicy policy;
  policy.threshold_n = n;
  BatchGate gate(policy);
  auto check_batch = [&](const Batch& batch) {
    const BatchOutput out = defended.process_batch(batch, &padding);
    REQUIRE(out.accepted);
    for (std::size_t i = 0; i < batch.packets.size(); ++i) {
      if (batch.packets[i].dummy) continue;
      const PacketFeatureVector& base = undefended_fv.at(batch.packets[i].packet_uid);
      // routing and logging decisions match the undefended chain
      CHECK(out.features[i].chain_path() == base.chain_path());
      REQUIRE(out.features[i].vnfs.size() == base.vnfs.size());
      for (std::size_t k = 0; k < base.vnfs.size(); ++k)
        CHECK(out.features[i].vnfs[k].ocall_indices == base.vnfs[k].ocall_indices);
    }
  };
  for (const PacketGroundTruth& p : session.packets)
    if (auto batch = gate.push(p)) check_batch(*batch);
  if (auto batch = gate.flush()) check_batch(*batch);
}

TEST_CASE("flush on timeout is available but off by default") {
  BatchPolicy plain;
  CHECK_FALSE(plain.flush_on_timeout);

  BatchPolicy timed;
  timed.threshold_n = 4;
  timed.flush_on_timeout = true;
  timed.timeout_s = 1.0;
  BatchGate gate(timed);
  CHECK_FALSE(gate.push(make_packet(1, 0, PacketKind::Request, 200, false, false, 0.0)));
  const auto flushed = gate.push(make_packet(1, 1, PacketKind::Request, 200, false, false, 5.0));
  REQUIRE(flushed.has_value());
  CHECK(flushed->dummy_count == 3);
  CHECK(gate.pending() == 1);
}
