#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "isclab/errors.hpp"
#include "isclab/rng.hpp"
#include "isclab/trace.hpp"

namespace isclab {

// The simulated chain's cycle counter. VNF processing advances it; the
// collector only reads it.
class VirtualClock {
 public:
  std::uint64_t now() const { return cycles_; }
  void advance(std::uint64_t cycles) { cycles_ += cycles; }
  void reset() { cycles_ = 0; }

 private:
  std::uint64_t cycles_ = 0;
};

enum Channel : unsigned {
  kChannelSequence = 1u << 0,   // which enclave/call was invoked
  kChannelParamSize = 1u << 1,  // marshaled parameter sizes
  kChannelDelay = 1u << 2,      // cycle stamps
  kChannelAll = kChannelSequence | kChannelParamSize | kChannelDelay,
};

struct CollectorConfig {
  std::uint64_t noise_amplitude = 0;  // uniform stamp noise half-width, cycles
  double cycle_scale = 1.0;           // virtual cycles per clock unit
  unsigned enabled_channels = kChannelAll;

  void validate() const {
    if (cycle_scale <= 0.0) throw ConfigError("cycle_scale must be positive");
  }
};

// An enclave's table of untrusted callables; the entry index is the OCALL
// call id. Table length is fixed per enclave.
struct OcallTable {
  std::uint32_t enclave_id = 0;
  std::vector<std::function<std::uint64_t(std::uint64_t)>> entries;
};

// The untrusted-OS observer. ECALLs are seen through an explicit dispatch
// hook, OCALLs through a replaced ocall table; both record the event before
// invoking the real behavior, which is otherwise untouched.
class Collector {
 public:
  // The clock may be attached later (the chain that owns it is usually
  // constructed after the collector), but must be attached before any event
  // is recorded.
  Collector(const VirtualClock* clock, CollectorConfig config, std::uint64_t noise_seed);

  void set_clock(const VirtualClock* clock) { clock_ = clock; }

  void begin_trace();
  Trace finalize();  // trace becomes immutable; StateError if none open
  bool tracing() const { return tracing_; }

  // Events recorded so far in the open trace (the observer streams them).
  std::span<const InterfaceEvent> pending_events() const { return events_; }

  // Virtual clock read with measurement noise; exact when amplitude is 0.
  // ContractError when no clock is attached.
  std::uint64_t read_cycles();

  // Records the ECALL, then runs the enclave body. OCALLs emitted by the
  // body nest after the ECALL event; the body's result and exceptions pass
  // through unchanged.
  template <class F>
  auto hook_ecall(std::uint32_t enclave_id, std::uint32_t call_id, std::uint64_t param_bytes,
                  F&& inner) -> decltype(std::forward<F>(inner)()) {
    emit(Direction::Ecall, enclave_id, call_id, param_bytes, std::nullopt);
    return std::forward<F>(inner)();
  }

  // Same-length table whose entry i records (cycle, OCALL, index i) and then
  // invokes the original entry i. Hijacking twice records double events.
  OcallTable hijack_ocall_table(const OcallTable& table);

  void reseed(std::uint64_t noise_seed);

 private:
  void emit(Direction dir, std::uint32_t enclave_id, std::uint32_t call_id,
            std::uint64_t param_bytes, std::optional<std::uint32_t> aux);

  const VirtualClock* clock_;
  CollectorConfig config_;
  SplitMix64 rng_;
  Trace events_;
  bool tracing_ = false;
  std::uint64_t next_seq_ = 0;
  std::uint64_t last_cycle_ = 0;
};

}  // namespace isclab
