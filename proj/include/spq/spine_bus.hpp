#pragma once

// Wire format shared by the spine node and the main controller node.
//
// Frame layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "SPQ1"
//   4       1     version (1)
//   5       1     msg_type (1 = SpineState, 2 = SpineCmd)
//   6       4     seq
//   10      8     t_us, sender clock
//   18      2     payload_len
//   20      n     payload
//   20+n    4     CRC-32 (IEEE) of bytes [0, 20+n)
//
// SpineState payload (8 bytes): u16 H_est in 0.1 mm, u8 lock_state,
// u8 health, u8 alarm, 3 reserved zero bytes.
// SpineCmd payload (4 bytes): u8 cmd, 3 reserved zero bytes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "spq/lock_control.hpp"

namespace spq::bus {

inline constexpr std::uint8_t kMagic[4] = {'S', 'P', 'Q', '1'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::size_t kStatePayloadSize = 8;
inline constexpr std::size_t kCmdPayloadSize = 4;

enum class MsgType : std::uint8_t { spine_state = 1, spine_cmd = 2 };

struct SpineStateMsg {
  std::uint16_t extension_tenth_mm = 0;
  LockPhase lock_state = LockPhase::unlocked;
  SensorHealth health = SensorHealth::both;
  bool alarm = false;

  /// Rounds to the nearest 0.1 mm, saturating at the u16 range.
  static SpineStateMsg from_snapshot(const SpineSnapshot& snapshot);
  double extension_m() const { return extension_tenth_mm * 1e-4; }

  bool operator==(const SpineStateMsg&) const = default;
};

struct SpineCmdMsg {
  LockCommand cmd = LockCommand::stay_unlocked;

  bool operator==(const SpineCmdMsg&) const = default;
};

using Message = std::variant<SpineStateMsg, SpineCmdMsg>;

struct Decoded {
  Message message;
  std::uint32_t seq = 0;
  std::uint64_t t_us = 0;

  bool operator==(const Decoded&) const = default;
};

enum class DecodeError : std::uint8_t {
  bad_magic,
  bad_version,
  bad_crc,
  truncated,
  unknown_type,
  bad_enum,
};

std::string_view to_string(DecodeError error);

using DecodeResult = std::variant<Decoded, DecodeError>;

/// CRC-32, reflected IEEE 802.3 polynomial (zlib's crc32).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_frame(const Message& message, std::uint32_t seq,
                                       std::uint64_t t_us);

/// Validates every field; never throws for any input.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

}  // namespace spq::bus
