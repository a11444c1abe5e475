#include "spq/lock_control.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "spq/spine_model.hpp"

namespace spq {

namespace {

// Float slop for distance comparisons against hole positions.
constexpr double kCompareEps = 1e-12;

bool usable(const SensorReading& reading) {
  return reading.value && std::isfinite(*reading.value) && *reading.value >= kSensorRangeMin &&
         *reading.value <= kSensorRangeMax;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

std::optional<double> parse_optional_double(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw ConfigError(fmt::format("replay log: '{}' is not a number", cell));
  }
  return value;
}

}  // namespace

LengthEstimate fuse_sensors(const SensorReading& a, const SensorReading& b,
                            const LengthEstimate& previous) {
  const bool a_ok = usable(a);
  const bool b_ok = usable(b);
  if (a_ok && b_ok) return {0.5 * (*a.value + *b.value), SensorHealth::both};
  if (a_ok) return {*a.value, SensorHealth::left_only};
  if (b_ok) return {*b.value, SensorHealth::right_only};
  return {previous.extension, SensorHealth::degraded_hold};
}

CusumDetector CusumDetector::armed_at(double ref) const {
  CusumDetector copy = *this;
  copy.reference = ref;
  copy.statistic = 0.0;
  return copy;
}

CusumStep cusum_update(const CusumDetector& detector, double extension) {
  CusumStep step{detector, false};
  const double g =
      std::max(0.0, detector.statistic + (detector.reference - extension) - detector.slack);
  step.alarm = g > detector.threshold + kCompareEps;
  step.detector.statistic = step.alarm ? 0.0 : g;
  return step;
}

double nearest_hole(double extension, std::span<const double> holes) {
  if (holes.empty()) throw ConfigError("lock panel has no holes");
  double best = holes.front();
  double best_distance = std::abs(extension - best);
  for (const double hole : holes.subspan(1)) {
    const double distance = std::abs(extension - hole);
    if (distance < best_distance - kCompareEps) {
      best = hole;
      best_distance = distance;
    }
  }
  return best;
}

std::vector<double> evenly_spaced_holes(const ScissorGeometry& geometry, double spacing) {
  if (!(spacing > 0.0)) throw ConfigError("hole spacing must be positive");
  std::vector<double> holes;
  const auto count =
      static_cast<int>(std::floor((geometry.h_max - geometry.h_min) / spacing + 1e-9)) + 1;
  holes.reserve(count);
  for (int i = 0; i < count; ++i) holes.push_back(geometry.h_min + i * spacing);
  return holes;
}

FsmStep lock_fsm_step(const LockState& state, LockCommand command, double extension,
                      bool press_alarm, std::span<const double> holes, double engage_tolerance) {
  const auto try_engage = [&]() -> FsmStep {
    const double hole = nearest_hole(extension, holes);
    if (std::abs(extension - hole) <= engage_tolerance + kCompareEps) {
      return {LockState::locked(hole), PinAction::engage(hole)};
    }
    return {{LockPhase::lock_pending, 0.0}, PinAction::none()};
  };

  switch (state.phase) {
    case LockPhase::locked:
      if (command == LockCommand::unlock) return {{LockPhase::unlock_pending, state.hole}, {}};
      return {state, {}};
    case LockPhase::unlock_pending:
      if (command == LockCommand::lock) return {LockState::locked(state.hole), {}};
      if (press_alarm) return {LockState::unlocked(), PinAction::retract()};
      return {state, {}};
    case LockPhase::unlocked:
      if (command == LockCommand::lock) return try_engage();
      return {state, {}};
    case LockPhase::lock_pending:
      if (command == LockCommand::unlock) return {LockState::unlocked(), {}};
      return try_engage();
  }
  return {state, {}};
}

std::int64_t SpineControllerConfig::tick_period_us() const {
  return static_cast<std::int64_t>(std::llround(1e6 / tick_hz));
}

SpineControllerConfig SpineControllerConfig::defaults(const ScissorGeometry& geometry) {
  SpineControllerConfig config;
  config.holes = evenly_spaced_holes(geometry);
  return config;
}

void SpineControllerConfig::validate() const {
  if (holes.empty()) throw ConfigError("lock panel has no holes");
  if (!std::is_sorted(holes.begin(), holes.end())) throw ConfigError("holes must be ascending");
  if (!(engage_tolerance > 0.0)) throw ConfigError("engage tolerance must be positive");
  if (!(cusum_slack > 0.0) || !(cusum_threshold > 0.0)) {
    throw ConfigError("CUSUM slack and threshold must be positive");
  }
  if (!(tick_hz > 0.0)) throw ConfigError("tick rate must be positive");
  if (stale_after_ticks < 0) throw ConfigError("stale_after_ticks must be >= 0");
}

SpineBundle SpineBundle::make(SpineControllerConfig config, LockState initial,
                              double initial_extension) {
  config.validate();
  SpineBundle bundle;
  bundle.detector.slack = config.cusum_slack;
  bundle.detector.threshold = config.cusum_threshold;
  bundle.detector.reference = initial.pinned() ? initial.hole : initial_extension;
  bundle.config = std::move(config);
  bundle.state = initial;
  bundle.estimate = {initial_extension, SensorHealth::both};
  bundle.standing_command =
      initial.pinned() ? LockCommand::stay_locked : LockCommand::stay_unlocked;
  return bundle;
}

SensorReading screen_reading(const SensorReading& reading, std::int64_t now_us,
                             const SpineControllerConfig& config) {
  if (!usable(reading)) return SensorReading::invalid(reading.timestamp_us);
  const auto max_age = config.stale_after_ticks * config.tick_period_us();
  if (now_us - reading.timestamp_us > max_age) return SensorReading::invalid(reading.timestamp_us);
  return reading;
}

TickResult spine_tick(const SpineBundle& bundle, const SensorReading& a, const SensorReading& b,
                      std::optional<LockCommand> command, std::int64_t now_us) {
  TickResult out{bundle, {}, {}};
  SpineBundle& next = out.bundle;
  next.tick = bundle.tick + 1;
  if (command) next.standing_command = *command;

  next.estimate = fuse_sensors(screen_reading(a, now_us, bundle.config),
                               screen_reading(b, now_us, bundle.config), bundle.estimate);

  bool alarm = false;
  if (bundle.state.phase == LockPhase::unlock_pending) {
    // A held estimate carries no new information about the press.
    const double sample = next.estimate.health == SensorHealth::degraded_hold
                              ? next.detector.reference
                              : next.estimate.extension;
    const auto step = cusum_update(next.detector, sample);
    next.detector = step.detector;
    alarm = step.alarm;
  }

  const auto fsm = lock_fsm_step(bundle.state, next.standing_command, next.estimate.extension,
                                 alarm, next.config.holes, next.config.engage_tolerance);
  if (fsm.state.phase == LockPhase::unlock_pending &&
      bundle.state.phase != LockPhase::unlock_pending) {
    next.detector = next.detector.armed_at(fsm.state.hole);
  }
  next.state = fsm.state;
  out.action = fsm.action;
  out.snapshot = {next.estimate.extension, next.state.phase, next.estimate.health, alarm};
  return out;
}

std::vector<ReplayRow> parse_replay_csv(std::istream& in) {
  std::vector<ReplayRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      if (trim(line).starts_with("tick")) continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 4) {
      throw ConfigError(fmt::format("replay log: expected 4 columns, got '{}'", line));
    }
    ReplayRow row;
    const auto tick = parse_optional_double(cells[0]);
    if (!tick) throw ConfigError("replay log: missing tick");
    row.tick = static_cast<std::int64_t>(*tick);
    row.sensor_a_mm = parse_optional_double(cells[1]);
    row.sensor_b_mm = parse_optional_double(cells[2]);
    const auto cmd = trim(cells[3]);
    if (!cmd.empty()) row.command = parse_lock_command(cmd);
    rows.push_back(row);
  }
  return rows;
}

std::vector<ReplayStep> replay_steps(const SpineBundle& initial, std::span<const ReplayRow> rows,
                                     SpineBundle* final_bundle) {
  std::vector<ReplayStep> steps;
  steps.reserve(rows.size());
  SpineBundle bundle = initial;
  const auto period = initial.config.tick_period_us();
  for (const auto& row : rows) {
    const std::int64_t now = row.tick * period;
    const auto reading = [now](const std::optional<double>& mm) {
      return mm ? SensorReading{*mm * 1e-3, now} : SensorReading::invalid(now);
    };
    auto result =
        spine_tick(bundle, reading(row.sensor_a_mm), reading(row.sensor_b_mm), row.command, now);
    bundle = std::move(result.bundle);
    steps.push_back({row.tick, result.snapshot, bundle.state, result.action});
  }
  if (final_bundle != nullptr) *final_bundle = std::move(bundle);
  return steps;
}

void write_replay_trace(std::ostream& trace, std::span<const ReplayStep> steps) {
  trace << "tick,h_est_m,health,state,hole_m,alarm,action,action_hole_m\n";
  for (const auto& step : steps) {
    trace << fmt::format("{},{:.6f},{},{},{:.4f},{},{},{:.4f}\n", step.tick,
                         step.snapshot.extension, to_string(step.snapshot.health),
                         to_string(step.snapshot.phase), step.state.hole,
                         step.snapshot.alarm ? 1 : 0, to_string(step.action.kind),
                         step.action.hole);
  }
}

SpineBundle replay_log(const SpineBundle& initial, std::span<const ReplayRow> rows,
                       std::ostream& trace) {
  SpineBundle bundle;
  write_replay_trace(trace, replay_steps(initial, rows, &bundle));
  return bundle;
}

std::string_view to_string(LockPhase phase) {
  switch (phase) {
    case LockPhase::unlocked: return "unlocked";
    case LockPhase::locked: return "locked";
    case LockPhase::unlock_pending: return "unlock_pending";
    case LockPhase::lock_pending: return "lock_pending";
  }
  return "?";
}

std::string_view to_string(LockCommand command) {
  switch (command) {
    case LockCommand::stay_unlocked: return "stay_unlocked";
    case LockCommand::stay_locked: return "stay_locked";
    case LockCommand::lock: return "lock";
    case LockCommand::unlock: return "unlock";
  }
  return "?";
}

std::string_view to_string(SensorHealth health) {
  switch (health) {
    case SensorHealth::both: return "both";
    case SensorHealth::left_only: return "left_only";
    case SensorHealth::right_only: return "right_only";
    case SensorHealth::degraded_hold: return "degraded_hold";
  }
  return "?";
}

std::string_view to_string(PinAction::Kind kind) {
  switch (kind) {
    case PinAction::Kind::none: return "none";
    case PinAction::Kind::engage: return "engage";
    case PinAction::Kind::retract: return "retract";
  }
  return "?";
}

LockCommand parse_lock_command(std::string_view text) {
  text = trim(text);
  for (auto cmd : {LockCommand::stay_unlocked, LockCommand::stay_locked, LockCommand::lock,
                   LockCommand::unlock}) {
    if (text == to_string(cmd) || text == std::to_string(static_cast<int>(cmd))) return cmd;
  }
  throw ConfigError(fmt::format("unknown lock command '{}'", text));
}

}  // namespace spq
