#pragma once

// The two bus participants. The spine node owns the lock bundle and ticks it
// at a fixed rate; commands arrive on a receive thread and are handed to the
// ticker through a one-slot mailbox where the newest command overwrites any
// unconsumed one. The controller node sends commands and records the state
// stream.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "spq/lock_control.hpp"
#include "spq/transport.hpp"

namespace spq::bus {

/// Latest-wins single-slot mailbox.
class CommandSlot {
 public:
  void post(LockCommand command);
  std::optional<LockCommand> take();

 private:
  std::mutex mutex_;
  std::optional<LockCommand> pending_;
};

/// Microseconds on the steady clock.
std::uint64_t monotonic_us();

using SensorPair = std::pair<SensorReading, SensorReading>;
/// Produces both sensor readings for tick `tick` at time `now_us`.
using SensorSource = std::function<SensorPair(std::int64_t tick, std::int64_t now_us)>;

struct SpineNodeConfig {
  Endpoint state_endpoint = default_state_endpoint();
  Endpoint cmd_endpoint = default_cmd_endpoint();
  SpineControllerConfig controller;
  LockState initial_state;
  double initial_extension = 0.0;
};

struct SpineTickRecord {
  std::int64_t tick = 0;
  std::optional<LockCommand> command;
  PinAction action;
  SpineSnapshot snapshot;
  std::uint32_t seq = 0;
};

class SpineNode {
 public:
  SpineNode(SpineNodeConfig config, SensorSource sensors);
  ~SpineNode();

  SpineNode(const SpineNode&) = delete;
  SpineNode& operator=(const SpineNode&) = delete;

  /// One tick: consume the mailbox, run the lock logic, publish state.
  SpineTickRecord tick_once(std::int64_t now_us);

  /// Moves at most one received command into the mailbox.
  bool pump_commands(std::chrono::milliseconds timeout);

  /// Background receive and tick threads. `on_tick` runs on the tick thread.
  void start(std::function<void(const SpineTickRecord&)> on_tick = {});
  void stop();

  CommandSlot& mailbox() noexcept { return mailbox_; }
  /// Only safe while stopped.
  const SpineBundle& bundle() const noexcept { return bundle_; }
  std::uint64_t dropped_frames() const;

 private:
  SpineNodeConfig config_;
  SensorSource sensors_;
  SpineBundle bundle_;
  Publisher publisher_;
  Subscriber subscriber_;
  CommandSlot mailbox_;
  mutable std::mutex subscriber_mutex_;
  std::jthread receive_thread_;
  std::jthread tick_thread_;
};

struct StateRecord {
  Decoded frame;
  bool stale = false;
  std::uint64_t received_us = 0;

  const SpineStateMsg& state() const { return std::get<SpineStateMsg>(frame.message); }
};

class ControllerNode {
 public:
  ControllerNode(Endpoint state_endpoint, Endpoint cmd_endpoint);
  ~ControllerNode();

  ControllerNode(const ControllerNode&) = delete;
  ControllerNode& operator=(const ControllerNode&) = delete;

  std::uint32_t send(LockCommand command);

  void start(std::function<void(const StateRecord&)> on_state = {});
  void stop();

  std::vector<StateRecord> history() const;
  /// Blocks until `predicate` holds for some newly recorded state or the
  /// timeout expires; returns that record.
  std::optional<StateRecord> wait_for(const std::function<bool(const StateRecord&)>& predicate,
                                      std::chrono::milliseconds timeout);

 private:
  Publisher publisher_;
  Subscriber subscriber_;
  mutable std::mutex mutex_;
  std::condition_variable changed_;
  std::vector<StateRecord> history_;
  std::size_t scanned_ = 0;
  std::jthread receive_thread_;
};

}  // namespace spq::bus
