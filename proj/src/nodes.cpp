#include "spq/nodes.hpp"

namespace spq::bus {

namespace {
constexpr auto kReceivePoll = std::chrono::milliseconds(20);
}

void CommandSlot::post(LockCommand command) {
  std::lock_guard lock(mutex_);
  pending_ = command;
}

std::optional<LockCommand> CommandSlot::take() {
  std::lock_guard lock(mutex_);
  return std::exchange(pending_, std::nullopt);
}

std::uint64_t monotonic_us() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                        std::chrono::steady_clock::now().time_since_epoch())
                                        .count());
}

SpineNode::SpineNode(SpineNodeConfig config, SensorSource sensors)
    : config_(std::move(config)),
      sensors_(std::move(sensors)),
      bundle_(SpineBundle::make(config_.controller, config_.initial_state, config_.initial_extension)),
      publisher_(config_.state_endpoint),
      subscriber_(config_.cmd_endpoint) {}

SpineNode::~SpineNode() { stop(); }

SpineTickRecord SpineNode::tick_once(std::int64_t now_us) {
  SpineTickRecord record;
  record.tick = bundle_.tick;
  record.command = mailbox_.take();
  const auto [a, b] = sensors_(bundle_.tick, now_us);
  auto result = spine_tick(bundle_, a, b, record.command, now_us);
  bundle_ = std::move(result.bundle);
  record.action = result.action;
  record.snapshot = result.snapshot;
  record.seq = publisher_.publish(SpineStateMsg::from_snapshot(result.snapshot),
                                  static_cast<std::uint64_t>(now_us));
  return record;
}

bool SpineNode::pump_commands(std::chrono::milliseconds timeout) {
  std::lock_guard lock(subscriber_mutex_);
  const auto received = subscriber_.receive(timeout);
  if (!received) return false;
  const auto* cmd = std::get_if<SpineCmdMsg>(&received->frame.message);
  // Out-of-order command frames would undo a newer intent.
  if (cmd == nullptr || received->stale) return false;
  mailbox_.post(cmd->cmd);
  return true;
}

void SpineNode::start(std::function<void(const SpineTickRecord&)> on_tick) {
  stop();
  receive_thread_ = std::jthread([this](std::stop_token token) {
    while (!token.stop_requested()) pump_commands(kReceivePoll);
  });
  tick_thread_ = std::jthread([this, on_tick = std::move(on_tick)](std::stop_token token) {
    const auto period = std::chrono::microseconds(config_.controller.tick_period_us());
    auto next = std::chrono::steady_clock::now();
    while (!token.stop_requested()) {
      const auto record = tick_once(static_cast<std::int64_t>(monotonic_us()));
      if (on_tick) on_tick(record);
      next += period;
      std::this_thread::sleep_until(next);
    }
  });
}

void SpineNode::stop() {
  if (tick_thread_.joinable()) {
    tick_thread_.request_stop();
    tick_thread_.join();
  }
  if (receive_thread_.joinable()) {
    receive_thread_.request_stop();
    receive_thread_.join();
  }
}

std::uint64_t SpineNode::dropped_frames() const {
  std::lock_guard lock(subscriber_mutex_);
  return subscriber_.dropped();
}

ControllerNode::ControllerNode(Endpoint state_endpoint, Endpoint cmd_endpoint)
    : publisher_(std::move(cmd_endpoint)), subscriber_(std::move(state_endpoint)) {}

ControllerNode::~ControllerNode() { stop(); }

std::uint32_t ControllerNode::send(LockCommand command) {
  return publisher_.publish(SpineCmdMsg{command}, monotonic_us());
}

void ControllerNode::start(std::function<void(const StateRecord&)> on_state) {
  stop();
  receive_thread_ = std::jthread([this, on_state = std::move(on_state)](std::stop_token token) {
    while (!token.stop_requested()) {
      const auto received = subscriber_.receive(kReceivePoll);
      if (!received || !std::holds_alternative<SpineStateMsg>(received->frame.message)) continue;
      StateRecord record{received->frame, received->stale, monotonic_us()};
      if (on_state) on_state(record);
      {
        std::lock_guard lock(mutex_);
        history_.push_back(std::move(record));
      }
      changed_.notify_all();
    }
  });
}

void ControllerNode::stop() {
  if (receive_thread_.joinable()) {
    receive_thread_.request_stop();
    receive_thread_.join();
  }
}

std::vector<StateRecord> ControllerNode::history() const {
  std::lock_guard lock(mutex_);
  return history_;
}

std::optional<StateRecord> ControllerNode::wait_for(
    const std::function<bool(const StateRecord&)>& predicate, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    for (; scanned_ < history_.size(); ++scanned_) {
      if (predicate(history_[scanned_])) return history_[scanned_++];
    }
    if (changed_.wait_until(lock, deadline) == std::cv_status::timeout &&
        scanned_ == history_.size()) {
      return std::nullopt;
    }
  }
}

}  // namespace spq::bus
