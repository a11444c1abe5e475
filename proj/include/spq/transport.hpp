#pragma once

// Fire-and-forget UDP pub/sub for spine-bus frames. Loopback unicast by
// default; an IPv4 multicast group address switches to multicast.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "spq/spine_bus.hpp"

namespace spq::bus {

inline constexpr std::uint16_t kDefaultStatePort = 7501;
inline constexpr std::uint16_t kDefaultCmdPort = 7502;

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;
  int multicast_ttl = 1;

  bool is_multicast() const;
  /// "host:port" or a bare port.
  static Endpoint parse(std::string_view text);
};

/// Loopback endpoints on 7501 (state) / 7502 (commands), overridable through
/// SPQ_STATE_PORT and SPQ_CMD_PORT.
Endpoint default_state_endpoint();
Endpoint default_cmd_endpoint();

/// Owning socket descriptor.
class UdpSocket {
 public:
  UdpSocket();
  ~UdpSocket();
  UdpSocket(UdpSocket&& other) noexcept;
  UdpSocket& operator=(UdpSocket&& other) noexcept;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  int fd() const noexcept { return fd_; }

 private:
  int fd_ = -1;
};

class Publisher {
 public:
  explicit Publisher(Endpoint endpoint);

  /// Sends one datagram as-is.
  void send(std::span<const std::uint8_t> frame);
  /// Encodes with the next sequence number and sends; returns that number.
  std::uint32_t publish(const Message& message, std::uint64_t t_us);

  const Endpoint& endpoint() const noexcept { return endpoint_; }

 private:
  Endpoint endpoint_;
  UdpSocket socket_;
  std::uint32_t next_seq_ = 1;
};

struct Received {
  Decoded frame;
  /// seq not greater than the last accepted one.
  bool stale = false;
};

class Subscriber {
 public:
  explicit Subscriber(Endpoint endpoint);

  /// Waits up to `timeout` for the next frame that decodes. Undecodable
  /// datagrams are counted and skipped.
  std::optional<Received> receive(std::chrono::milliseconds timeout);

  std::uint64_t dropped() const noexcept { return dropped_; }
  std::uint64_t accepted() const noexcept { return accepted_; }

 private:
  Endpoint endpoint_;
  UdpSocket socket_;
  std::optional<std::uint32_t> last_seq_;
  std::uint64_t dropped_ = 0;
  std::uint64_t accepted_ = 0;
};

}  // namespace spq::bus
