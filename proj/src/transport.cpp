#include "spq/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <cstring>

#include <fmt/format.h>

namespace spq::bus {

namespace {

sockaddr_in to_sockaddr(const Endpoint& endpoint) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(endpoint.port);
  if (inet_pton(AF_INET, endpoint.address.c_str(), &addr.sin_addr) != 1) {
    throw TransportError(fmt::format("invalid IPv4 address '{}'", endpoint.address));
  }
  return addr;
}

[[noreturn]] void fail(std::string_view what) {
  throw TransportError(fmt::format("{}: {}", what, std::strerror(errno)));
}

std::uint16_t parse_port(std::string_view text) {
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value == 0 || value > 65535) {
    throw TransportError(fmt::format("invalid port '{}'", text));
  }
  return static_cast<std::uint16_t>(value);
}

Endpoint loopback_with_env(const char* variable, std::uint16_t fallback) {
  Endpoint endpoint;
  endpoint.port = fallback;
  if (const char* value = std::getenv(variable); value != nullptr && *value != '\0') {
    endpoint.port = parse_port(value);
  }
  return endpoint;
}

}  // namespace

bool Endpoint::is_multicast() const {
  in_addr addr{};
  if (inet_pton(AF_INET, address.c_str(), &addr) != 1) return false;
  return IN_MULTICAST(ntohl(addr.s_addr));
}

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint endpoint;
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    endpoint.port = parse_port(text);
  } else {
    endpoint.address = std::string(text.substr(0, colon));
    endpoint.port = parse_port(text.substr(colon + 1));
  }
  return endpoint;
}

Endpoint default_state_endpoint() { return loopback_with_env("SPQ_STATE_PORT", kDefaultStatePort); }
Endpoint default_cmd_endpoint() { return loopback_with_env("SPQ_CMD_PORT", kDefaultCmdPort); }

UdpSocket::UdpSocket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
  if (fd_ < 0) fail("socket");
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) ::close(fd_);
}

UdpSocket::UdpSocket(UdpSocket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

UdpSocket& UdpSocket::operator=(UdpSocket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

Publisher::Publisher(Endpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.is_multicast()) {
    const unsigned char ttl = static_cast<unsigned char>(endpoint_.multicast_ttl);
    if (::setsockopt(socket_.fd(), IPPROTO_IP, IP_MULTICAST_TTL, &ttl, sizeof ttl) != 0) {
      fail("IP_MULTICAST_TTL");
    }
    const unsigned char loop = 1;
    ::setsockopt(socket_.fd(), IPPROTO_IP, IP_MULTICAST_LOOP, &loop, sizeof loop);
  }
}

void Publisher::send(std::span<const std::uint8_t> frame) {
  const auto addr = to_sockaddr(endpoint_);
  const auto sent = ::sendto(socket_.fd(), frame.data(), frame.size(), 0,
                             reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
  if (sent < 0) {
    // Nobody listening on loopback is a normal condition for datagrams.
    if (errno == ECONNREFUSED) return;
    fail("sendto");
  }
}

std::uint32_t Publisher::publish(const Message& message, std::uint64_t t_us) {
  const std::uint32_t seq = next_seq_++;
  send(encode_frame(message, seq, t_us));
  return seq;
}

Subscriber::Subscriber(Endpoint endpoint) : endpoint_(std::move(endpoint)) {
  const int yes = 1;
  ::setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in bind_addr = to_sockaddr(endpoint_);
  if (endpoint_.is_multicast()) bind_addr.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(socket_.fd(), reinterpret_cast<const sockaddr*>(&bind_addr), sizeof bind_addr) != 0) {
    fail(fmt::format("bind {}:{}", endpoint_.address, endpoint_.port));
  }
  if (endpoint_.is_multicast()) {
    ip_mreq request{};
    request.imr_multiaddr = to_sockaddr(endpoint_).sin_addr;
    request.imr_interface.s_addr = htonl(INADDR_ANY);
    if (::setsockopt(socket_.fd(), IPPROTO_IP, IP_ADD_MEMBERSHIP, &request, sizeof request) != 0) {
      fail("IP_ADD_MEMBERSHIP");
    }
  }
}

std::optional<Received> Subscriber::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::array<std::uint8_t, 2048> buffer{};
  while (true) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    pollfd pfd{socket_.fd(), POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::max<long>(0, remaining.count())));
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail("poll");
    }
    if (ready == 0) return std::nullopt;

    const auto size = ::recv(socket_.fd(), buffer.data(), buffer.size(), 0);
    if (size < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail("recv");
    }
    const auto result = decode_frame(std::span(buffer.data(), static_cast<std::size_t>(size)));
    if (const auto* decoded = std::get_if<Decoded>(&result)) {
      Received received{*decoded, last_seq_ && decoded->seq <= *last_seq_};
      if (!received.stale) last_seq_ = decoded->seq;
      ++accepted_;
      return received;
    }
    ++dropped_;
  }
}

}  // namespace spq::bus
