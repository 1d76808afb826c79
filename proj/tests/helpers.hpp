#pragma once

#include <memory>

#include "isclab/chain.hpp"
#include "isclab/collector.hpp"
#include "isclab/corpus.hpp"

namespace isclab::testing {

// Small rule sets keep unit tests fast; delay structure is the default.
inline ChainConfig small_chain_config(std::uint64_t seed = 11) {
  ChainConfig config;
  config.rules = generate_ruleset(seed, 50, 120, 32);
  return config;
}

struct ChainFixture {
  ChainConfig config;
  std::unique_ptr<Collector> collector;
  std::unique_ptr<ServiceChain> chain;

  explicit ChainFixture(ChainConfig cfg = small_chain_config(),
                        CollectorConfig observer = {}, std::uint64_t seed = 5)
      : config(std::move(cfg)) {
    collector = std::make_unique<Collector>(nullptr, observer, seed + 1);
    chain = std::make_unique<ServiceChain>(config, collector.get(), seed);
    collector->set_clock(&chain->clock());
  }
};

inline PacketGroundTruth make_packet(std::uint32_t page, std::uint32_t object, PacketKind kind,
                                     std::uint64_t bytes, bool suspicious = false,
                                     bool loggable = false, double arrival = 0.0) {
  PacketGroundTruth p;
  p.packet_uid = (static_cast<std::uint64_t>(page) << 32) | (object << 8) |
                 (kind == PacketKind::Request ? 0 : 1);
  p.page_id = page;
  p.object_id = object;
  p.kind = kind;
  p.payload_bytes = bytes;
  p.suspicious = suspicious;
  p.loggable = loggable;
  p.arrival_time = arrival;
  return p;
}

}  // namespace isclab::testing
