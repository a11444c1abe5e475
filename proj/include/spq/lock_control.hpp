#pragma once

// Embedded logic of the lockable spine: dual distance-sensor fusion, CUSUM
// press detection and the lock/unlock state machine.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spq/errors.hpp"

namespace spq {

struct ScissorGeometry;

inline constexpr double kSensorRangeMin = 0.0;
inline constexpr double kSensorRangeMax = 0.5;

/// One distance-sensor sample; an empty value marks a failed read.
struct SensorReading {
  std::optional<double> value;
  std::int64_t timestamp_us = 0;

  static SensorReading invalid(std::int64_t timestamp_us = 0) { return {std::nullopt, timestamp_us}; }
};

// Numeric values are the wire codes.
enum class SensorHealth : std::uint8_t { both = 0, left_only = 1, right_only = 2, degraded_hold = 3 };

struct LengthEstimate {
  double extension = 0.0;
  SensorHealth health = SensorHealth::both;

  bool operator==(const LengthEstimate&) const = default;
};

/// Mean of the valid readings, falling back to one sensor, or holding the
/// previous value when neither reading is usable.
LengthEstimate fuse_sensors(const SensorReading& a, const SensorReading& b,
                            const LengthEstimate& previous);

/// One-sided (decrease) CUSUM statistic referenced to the locking length.
struct CusumDetector {
  double reference = 0.0;   ///< mu_ref, the locked extension
  double slack = 0.002;     ///< kappa
  double threshold = 0.006; ///< alarm level h
  double statistic = 0.0;   ///< g, never negative

  /// Copy re-referenced to `reference` with the statistic cleared.
  CusumDetector armed_at(double reference) const;

  bool operator==(const CusumDetector&) const = default;
};

struct CusumStep {
  CusumDetector detector;
  bool alarm = false;
};

/// g' = max(0, g + (mu_ref - x) - kappa); alarm when g' > h, after which g
/// restarts from zero.
CusumStep cusum_update(const CusumDetector& detector, double extension);

/// Hole position closest to `extension`; ties go to the shorter hole.
/// `holes` must be sorted ascending; throws ConfigError if empty.
double nearest_hole(double extension, std::span<const double> holes);

/// Holes every `spacing` meters from H_min to H_max inclusive.
std::vector<double> evenly_spaced_holes(const ScissorGeometry& geometry, double spacing = 0.02);

// Numeric values are the wire codes.
enum class LockPhase : std::uint8_t { unlocked = 0, locked = 1, unlock_pending = 2, lock_pending = 3 };
enum class LockCommand : std::uint8_t { stay_unlocked = 0, stay_locked = 1, lock = 2, unlock = 3 };

struct LockState {
  LockPhase phase = LockPhase::unlocked;
  double hole = 0.0;  ///< pin position; meaningful while locked or unlock_pending

  static LockState locked(double hole) { return {LockPhase::locked, hole}; }
  static LockState unlocked() { return {LockPhase::unlocked, 0.0}; }

  bool pinned() const noexcept {
    return phase == LockPhase::locked || phase == LockPhase::unlock_pending;
  }
  bool operator==(const LockState&) const = default;
};

struct PinAction {
  enum class Kind : std::uint8_t { none = 0, engage = 1, retract = 2 };
  Kind kind = Kind::none;
  double hole = 0.0;

  static PinAction none() { return {}; }
  static PinAction engage(double hole) { return {Kind::engage, hole}; }
  static PinAction retract() { return {Kind::retract, 0.0}; }

  bool operator==(const PinAction&) const = default;
};

struct FsmStep {
  LockState state;
  PinAction action;
};

/// Single deterministic transition of the lock state machine.
///
/// The pin is retracted only from unlock_pending on a press alarm, and
/// unlock_pending is entered only on an unlock command. A lock command moves
/// to lock_pending and engages in the same step when a hole is within
/// `engage_tolerance`. An opposite command cancels a pending phase. Stay
/// commands never trigger transitions. Inputs that make no sense for the
/// current phase are ignored.
FsmStep lock_fsm_step(const LockState& state, LockCommand command, double extension,
                      bool press_alarm, std::span<const double> holes, double engage_tolerance);

struct SpineControllerConfig {
  std::vector<double> holes;
  double engage_tolerance = 0.002;
  double cusum_slack = 0.002;
  double cusum_threshold = 0.006;
  double tick_hz = 100.0;
  int stale_after_ticks = 2;

  std::int64_t tick_period_us() const;
  /// Holes from `geometry`, all other fields at their defaults.
  static SpineControllerConfig defaults(const ScissorGeometry& geometry);
  void validate() const;
};

/// Everything the spine node carries between ticks.
struct SpineBundle {
  SpineControllerConfig config;
  LockState state;
  LengthEstimate estimate;
  CusumDetector detector;
  /// Last command received; re-applied on ticks without a new one.
  LockCommand standing_command = LockCommand::stay_unlocked;
  std::int64_t tick = 0;

  static SpineBundle make(SpineControllerConfig config, LockState initial,
                          double initial_extension);
};

/// State published after every tick.
struct SpineSnapshot {
  double extension = 0.0;
  LockPhase phase = LockPhase::unlocked;
  SensorHealth health = SensorHealth::both;
  bool alarm = false;

  bool operator==(const SpineSnapshot&) const = default;
};

struct TickResult {
  SpineBundle bundle;
  PinAction action;
  SpineSnapshot snapshot;
};

/// Validity filter applied by spine_tick: out-of-range or older than
/// `stale_after_ticks` periods relative to `now_us` reads as invalid.
SensorReading screen_reading(const SensorReading& reading, std::int64_t now_us,
                             const SpineControllerConfig& config);

/// fuse -> CUSUM (only while unlock_pending) -> state machine.
TickResult spine_tick(const SpineBundle& bundle, const SensorReading& a, const SensorReading& b,
                      std::optional<LockCommand> command, std::int64_t now_us);

// Replay of recorded sensor/command logs.
//
// Input CSV columns: tick,sensor_a_mm,sensor_b_mm,cmd (empty cell = invalid
// reading or no command). Output CSV columns:
// tick,h_est_m,health,state,hole_m,alarm,action,action_hole_m

struct ReplayRow {
  std::int64_t tick = 0;
  std::optional<double> sensor_a_mm;
  std::optional<double> sensor_b_mm;
  std::optional<LockCommand> command;
};

std::vector<ReplayRow> parse_replay_csv(std::istream& in);

struct ReplayStep {
  std::int64_t tick = 0;
  SpineSnapshot snapshot;
  LockState state;
  PinAction action;
};

/// Row `tick` is fed at time tick * period, both readings stamped fresh.
std::vector<ReplayStep> replay_steps(const SpineBundle& initial, std::span<const ReplayRow> rows,
                                     SpineBundle* final_bundle = nullptr);

void write_replay_trace(std::ostream& trace, std::span<const ReplayStep> steps);

/// replay_steps followed by write_replay_trace. Returns the final bundle.
SpineBundle replay_log(const SpineBundle& initial, std::span<const ReplayRow> rows,
                       std::ostream& trace);

std::string_view to_string(LockPhase phase);
std::string_view to_string(LockCommand command);
std::string_view to_string(SensorHealth health);
std::string_view to_string(PinAction::Kind kind);
LockCommand parse_lock_command(std::string_view text);

}  // namespace spq
