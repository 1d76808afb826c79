#pragma once

#include <cstdint>

namespace isclab {

enum class PacketKind : std::uint8_t { Request, ResponseSegment };
enum class ContentClass : std::uint8_t { Text, Image };

// Simulator-side truth about one packet. The attack never reads these
// fields; they exist for driving the chain and for scoring detections.
struct PacketGroundTruth {
  std::uint64_t packet_uid = 0;
  std::uint32_t page_id = 0;
  std::uint32_t object_id = 0;
  PacketKind kind = PacketKind::Request;
  std::uint64_t payload_bytes = 0;  // plaintext size, > 0
  ContentClass content_class = ContentClass::Text;
  bool suspicious = false;  // routes through the IDS (response path only)
  bool loggable = false;    // triggers an IDS log write when inspected
  bool constant = true;     // recurs identically in every visit of its page
  bool dummy = false;       // batch-flush filler, excluded from scoring
  double arrival_time = 0.0;  // seconds since session start

  friend bool operator==(const PacketGroundTruth&, const PacketGroundTruth&) = default;
};

// page_id used for batch-flush dummies.
inline constexpr std::uint32_t kDummyPageId = 0xffffffffu;

}  // namespace isclab
