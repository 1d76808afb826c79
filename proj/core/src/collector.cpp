#include "isclab/collector.hpp"

#include <cmath>

namespace isclab {

Collector::Collector(const VirtualClock* clock, CollectorConfig config, std::uint64_t noise_seed)
    : clock_(clock), config_(config), rng_(noise_seed) {
  config_.validate();
}

void Collector::begin_trace() {
  if (tracing_) throw StateError("trace already open");
  events_.clear();
  tracing_ = true;
  next_seq_ = 0;
  last_cycle_ = 0;
}

Trace Collector::finalize() {
  if (!tracing_) throw StateError("no open trace");
  tracing_ = false;
  return std::move(events_);
}

std::uint64_t Collector::read_cycles() {
  if (!clock_) throw ContractError("collector is not attached to a virtual clock");
  const double scaled = static_cast<double>(clock_->now()) * config_.cycle_scale;
  const std::int64_t noisy = static_cast<std::int64_t>(std::llround(scaled)) +
                             rng_.jitter(config_.noise_amplitude);
  return noisy < 0 ? 0 : static_cast<std::uint64_t>(noisy);
}

void Collector::emit(Direction dir, std::uint32_t enclave_id, std::uint32_t call_id,
                     std::uint64_t param_bytes, std::optional<std::uint32_t> aux) {
  if (!tracing_) throw StateError("event emitted outside an open trace");

  InterfaceEvent e;
  e.seq_no = next_seq_++;
  e.direction = dir;
  if (config_.enabled_channels & kChannelDelay) {
    // Stamps never run backwards: system noise can only add time.
    e.cycle = std::max(read_cycles(), last_cycle_);
    last_cycle_ = e.cycle;
  }
  if (config_.enabled_channels & kChannelParamSize) e.param_bytes = param_bytes;
  if (config_.enabled_channels & kChannelSequence) {
    e.enclave_id = enclave_id;
    e.call_id = call_id;
    e.aux = aux;
  }
  events_.push_back(std::move(e));
}

OcallTable Collector::hijack_ocall_table(const OcallTable& table) {
  OcallTable hijacked;
  hijacked.enclave_id = table.enclave_id;
  hijacked.entries.reserve(table.entries.size());
  for (std::uint32_t i = 0; i < table.entries.size(); ++i) {
    auto original = table.entries[i];
    const std::uint32_t enclave = table.enclave_id;
    hijacked.entries.push_back(
        [this, original = std::move(original), enclave, i](std::uint64_t param) {
          emit(Direction::Ocall, enclave, i, param, i);
          return original(param);
        });
  }
  return hijacked;
}

void Collector::reseed(std::uint64_t noise_seed) { rng_ = SplitMix64(noise_seed); }

}  // namespace isclab
