#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace isclab {

enum class Direction : std::uint8_t { Ecall, Ocall };

// One observed ECALL/OCALL occurrence, the atom of the side channel.
// Events are immutable values; a finalized trace can be shared freely.
struct InterfaceEvent {
  std::uint64_t seq_no = 0;     // strictly increasing within one trace
  std::uint64_t cycle = 0;      // virtual cycle stamp, non-decreasing
  std::uint32_t enclave_id = 0;
  Direction direction = Direction::Ecall;
  std::uint32_t call_id = 0;
  std::uint64_t param_bytes = 0;  // total marshaled parameter size
  std::optional<std::uint32_t> aux;  // e.g. the OCALL-table index

  friend bool operator==(const InterfaceEvent&, const InterfaceEvent&) = default;
};

using Trace = std::vector<InterfaceEvent>;

inline constexpr const char* kTraceHeader = "ISCTRACE 1";

// Throws ValidationError if the sequence breaks an InterfaceEvent invariant.
void validate_trace(std::span<const InterfaceEvent> events);

// Writes the textual trace format: the header line, then one event per line
//   seq,cycle,enclave_id,dir,call_id,param_bytes,aux
// with dir in {E,O} and aux "-" when absent. LF endings, no trailing blanks.
// Returns the number of bytes written. Byte-for-byte deterministic.
std::size_t write_trace(std::span<const InterfaceEvent> events, std::ostream& out);

// Inverse of write_trace. Throws ParseError (with line/column) on malformed
// input and ValidationError when a well-formed line breaks an invariant.
Trace read_trace(std::istream& in);

// Cycle distance between an ECALL and a later OCALL of the same trace.
// The same event compared with itself yields 0. Throws ContractError when
// the ocall does not come after the ecall.
std::uint64_t delay_of(const InterfaceEvent& ecall, const InterfaceEvent& ocall);

}  // namespace isclab
