#include "spq/spine_bus.hpp"

#include <algorithm>
#include <cmath>

#include <zlib.h>

namespace spq::bus {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t value) {
  out.push_back(static_cast<std::uint8_t>(value));
  out.push_back(static_cast<std::uint8_t>(value >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t value) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(value >> shift));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t value) {
  for (int shift = 0; shift < 64; shift += 8) out.push_back(static_cast<std::uint8_t>(value >> shift));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[offset + i]) << (8 * i);
  return value;
}

bool reserved_clear(std::span<const std::uint8_t> bytes) {
  return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; });
}

}  // namespace

SpineStateMsg SpineStateMsg::from_snapshot(const SpineSnapshot& snapshot) {
  SpineStateMsg msg;
  const double tenths = std::round(snapshot.extension * 1e4);
  msg.extension_tenth_mm = static_cast<std::uint16_t>(std::clamp(tenths, 0.0, 65535.0));
  msg.lock_state = snapshot.phase;
  msg.health = snapshot.health;
  msg.alarm = snapshot.alarm;
  return msg;
}

std::string_view to_string(DecodeError error) {
  switch (error) {
    case DecodeError::bad_magic: return "bad_magic";
    case DecodeError::bad_version: return "bad_version";
    case DecodeError::bad_crc: return "bad_crc";
    case DecodeError::truncated: return "truncated";
    case DecodeError::unknown_type: return "unknown_type";
    case DecodeError::bad_enum: return "bad_enum";
  }
  return "?";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::vector<std::uint8_t> encode_frame(const Message& message, std::uint32_t seq,
                                       std::uint64_t t_us) {
  std::vector<std::uint8_t> payload;
  MsgType type{};
  if (const auto* state = std::get_if<SpineStateMsg>(&message)) {
    type = MsgType::spine_state;
    put_u16(payload, state->extension_tenth_mm);
    payload.push_back(static_cast<std::uint8_t>(state->lock_state));
    payload.push_back(static_cast<std::uint8_t>(state->health));
    payload.push_back(state->alarm ? 1 : 0);
    payload.insert(payload.end(), 3, 0);
  } else {
    type = MsgType::spine_cmd;
    payload.push_back(static_cast<std::uint8_t>(std::get<SpineCmdMsg>(message).cmd));
    payload.insert(payload.end(), 3, 0);
  }

  std::vector<std::uint8_t> frame;
  frame.reserve(kHeaderSize + payload.size() + kCrcSize);
  for (const auto byte : kMagic) frame.push_back(byte);
  frame.push_back(kVersion);
  frame.push_back(static_cast<std::uint8_t>(type));
  put_u32(frame, seq);
  put_u64(frame, t_us);
  put_u16(frame, static_cast<std::uint16_t>(payload.size()));
  frame.insert(frame.end(), payload.begin(), payload.end());
  put_u32(frame, crc32(frame));
  return frame;
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) return DecodeError::truncated;
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) return DecodeError::bad_magic;
  if (bytes.size() < 5) return DecodeError::truncated;
  if (bytes[4] != kVersion) return DecodeError::bad_version;
  if (bytes.size() < kHeaderSize) return DecodeError::truncated;

  const auto payload_len = get_le<std::uint16_t>(bytes, 18);
  const std::size_t total = kHeaderSize + payload_len + kCrcSize;
  // Short reads and trailing bytes are both length mismatches.
  if (bytes.size() != total) return DecodeError::truncated;
  const auto body = bytes.first(total - kCrcSize);
  if (crc32(body) != get_le<std::uint32_t>(bytes, total - kCrcSize)) return DecodeError::bad_crc;

  Decoded decoded;
  decoded.seq = get_le<std::uint32_t>(bytes, 6);
  decoded.t_us = get_le<std::uint64_t>(bytes, 10);
  const auto payload = bytes.subspan(kHeaderSize, payload_len);

  switch (bytes[5]) {
    case static_cast<std::uint8_t>(MsgType::spine_state): {
      if (payload.size() != kStatePayloadSize) return DecodeError::truncated;
      if (payload[2] > 3 || payload[3] > 3 || payload[4] > 1 || !reserved_clear(payload.subspan(5))) {
        return DecodeError::bad_enum;
      }
      SpineStateMsg msg;
      msg.extension_tenth_mm = get_le<std::uint16_t>(payload, 0);
      msg.lock_state = static_cast<LockPhase>(payload[2]);
      msg.health = static_cast<SensorHealth>(payload[3]);
      msg.alarm = payload[4] == 1;
      decoded.message = msg;
      return decoded;
    }
    case static_cast<std::uint8_t>(MsgType::spine_cmd): {
      if (payload.size() != kCmdPayloadSize) return DecodeError::truncated;
      if (payload[0] > 3 || !reserved_clear(payload.subspan(1))) return DecodeError::bad_enum;
      decoded.message = SpineCmdMsg{static_cast<LockCommand>(payload[0])};
      return decoded;
    }
    default:
      return DecodeError::unknown_type;
  }
}

}  // namespace spq::bus
