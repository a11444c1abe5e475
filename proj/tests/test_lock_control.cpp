#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "spq/lock_control.hpp"
#include "spq/spine_model.hpp"

using namespace spq;

namespace {

const std::vector<double> kHoles{0.08, 0.10, 0.12, 0.14, 0.16, 0.18, 0.20};

SensorReading at(double h, std::int64_t t = 0) { return {h, t}; }

SpineBundle locked_bundle(double hole) {
  return SpineBundle::make(SpineControllerConfig::defaults(ScissorGeometry{}), LockState::locked(hole), hole);
}

}  // namespace

TEST_CASE("sensor fusion") {
  const LengthEstimate prev{0.15, SensorHealth::both};
  CHECK(fuse_sensors(at(0.10), at(0.12), prev) == LengthEstimate{0.11, SensorHealth::both});
  CHECK(fuse_sensors(at(0.10), SensorReading::invalid(), prev) == LengthEstimate{0.10, SensorHealth::left_only});
  CHECK(fuse_sensors(SensorReading::invalid(), at(0.12), prev) == LengthEstimate{0.12, SensorHealth::right_only});
  CHECK(fuse_sensors(SensorReading::invalid(), SensorReading::invalid(), prev) ==
        LengthEstimate{0.15, SensorHealth::degraded_hold});
  CHECK(fuse_sensors(at(-0.01), at(0.7), prev).health == SensorHealth::degraded_hold);
  CHECK(fuse_sensors(at(std::nan("")), at(0.12), prev).health == SensorHealth::right_only);
}

TEST_CASE("stale readings are screened out") {
  auto config = SpineControllerConfig::defaults(ScissorGeometry{});
  const auto period = config.tick_period_us();
  CHECK(period == 10000);
  CHECK(screen_reading(at(0.1, 0), 2 * period, config).value.has_value());
  CHECK_FALSE(screen_reading(at(0.1, 0), 2 * period + 1, config).value.has_value());
}

TEST_CASE("cusum recursion by hand") {
  CusumDetector det{0.12, 0.002, 0.006, 0.0};
  const double expected[] = {0.003, 0.006};
  for (double g : expected) {
    const auto step = cusum_update(det, 0.115);
    CHECK_FALSE(step.alarm);
    CHECK(step.detector.statistic == doctest::Approx(g).epsilon(1e-12));
    det = step.detector;
  }
  const auto third = cusum_update(det, 0.115);
  CHECK(third.alarm);
  CHECK(third.detector.statistic == 0.0);

  CusumDetector fresh{0.12, 0.002, 0.006, 0.0};
  CHECK(cusum_update(fresh, 0.12).detector.statistic == 0.0);
  CHECK(cusum_update(fresh, 0.119).detector.statistic == 0.0);
}

TEST_CASE("cusum statistic stays non-negative and shrinks above mu - kappa") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(0.10, 0.14);
  CusumDetector det{0.12, 0.002, 0.006, 0.0};
  for (int i = 0; i < 5000; ++i) {
    const double sample = x(rng);
    const auto step = cusum_update(det, sample);
    REQUIRE(step.detector.statistic >= 0.0);
    if (sample >= det.reference - det.slack && !step.alarm) {
      REQUIRE(step.detector.statistic <= det.statistic);
    }
    det = step.detector;
  }
}

TEST_CASE("nearest hole") {
  CHECK(nearest_hole(0.113, kHoles) == 0.12);
  CHECK(nearest_hole(0.11, kHoles) == 0.10);
  CHECK(nearest_hole(0.08, kHoles) == 0.08);
  CHECK(nearest_hole(0.5, kHoles) == 0.20);
  CHECK_THROWS_AS(nearest_hole(0.1, std::vector<double>{}), ConfigError);
  const auto holes = evenly_spaced_holes(ScissorGeometry{});
  REQUIRE(holes.size() == 7);
  for (std::size_t i = 0; i < holes.size(); ++i) CHECK(holes[i] == doctest::Approx(kHoles[i]).epsilon(1e-12));
}

TEST_CASE("state machine transition table") {
  const double tol = 0.002;
  SUBCASE("stay locked") {
    const auto s = lock_fsm_step(LockState::locked(0.12), LockCommand::stay_locked, 0.09, true, kHoles, tol);
    CHECK(s.state == LockState::locked(0.12));
    CHECK(s.action == PinAction::none());
  }
  SUBCASE("lock engages at the nearest hole") {
    const auto s = lock_fsm_step(LockState::unlocked(), LockCommand::lock, 0.081, false, kHoles, tol);
    CHECK(s.state == LockState::locked(0.08));
    CHECK(s.action == PinAction::engage(0.08));
  }
  SUBCASE("lock waits for a hole") {
    const auto s = lock_fsm_step(LockState::unlocked(), LockCommand::lock, 0.09, false, kHoles, tol);
    CHECK(s.state.phase == LockPhase::lock_pending);
    CHECK(s.action == PinAction::none());
    const auto later = lock_fsm_step(s.state, LockCommand::lock, 0.0995, false, kHoles, tol);
    CHECK(later.state == LockState::locked(0.10));
    CHECK(later.action == PinAction::engage(0.10));
    const auto cancel = lock_fsm_step(s.state, LockCommand::unlock, 0.09, false, kHoles, tol);
    CHECK(cancel.state == LockState::unlocked());
  }
  SUBCASE("unlock needs the press") {
    const auto pending = lock_fsm_step(LockState::locked(0.08), LockCommand::unlock, 0.08, false, kHoles, tol);
    CHECK(pending.state == LockState{LockPhase::unlock_pending, 0.08});
    CHECK(pending.action == PinAction::none());
    const auto waiting = lock_fsm_step(pending.state, LockCommand::unlock, 0.08, false, kHoles, tol);
    CHECK(waiting.state == pending.state);
    const auto released = lock_fsm_step(pending.state, LockCommand::unlock, 0.074, true, kHoles, tol);
    CHECK(released.state == LockState::unlocked());
    CHECK(released.action == PinAction::retract());
  }
  SUBCASE("alarm alone never releases") {
    const auto s = lock_fsm_step(LockState::locked(0.08), LockCommand::stay_locked, 0.07, true, kHoles, tol);
    CHECK(s.state == LockState::locked(0.08));
    CHECK(s.action == PinAction::none());
  }
  SUBCASE("stay unlocked and stray alarms are ignored") {
    const auto s = lock_fsm_step(LockState::unlocked(), LockCommand::stay_unlocked, 0.1, true, kHoles, tol);
    CHECK(s.state == LockState::unlocked());
    CHECK(s.action == PinAction::none());
  }
}

TEST_CASE("state machine is a pure function") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> phase(0, 3), cmd(0, 3), flag(0, 1);
  std::uniform_real_distribution<double> h(0.07, 0.21);
  for (int i = 0; i < 1000; ++i) {
    const LockState s{static_cast<LockPhase>(phase(rng)), 0.12};
    const auto c = static_cast<LockCommand>(cmd(rng));
    const double x = h(rng);
    const bool alarm = flag(rng) == 1;
    const auto a = lock_fsm_step(s, c, x, alarm, kHoles, 0.002);
    const auto b = lock_fsm_step(s, c, x, alarm, kHoles, 0.002);
    REQUIRE(a.state == b.state);
    REQUIRE(a.action == b.action);
    if (a.action.kind == PinAction::Kind::engage) REQUIRE(std::abs(x - a.action.hole) <= 0.002 + 1e-12);
    if (a.action.kind == PinAction::Kind::retract) {
      REQUIRE(s.phase == LockPhase::unlock_pending);
      REQUIRE(alarm);
    }
  }
}

TEST_CASE("tick composition") {
  SUBCASE("no command keeps the state") {
    auto b = locked_bundle(0.12);
    const auto r = spine_tick(b, at(0.12), at(0.12), std::nullopt, 0);
    CHECK(r.bundle.state == LockState::locked(0.12));
    CHECK(r.action == PinAction::none());
    CHECK(r.snapshot == SpineSnapshot{0.12, LockPhase::locked, SensorHealth::both, false});
  }
  SUBCASE("press after unlock retracts on the alarm tick") {
    auto b = locked_bundle(0.08);
    std::int64_t t = 0;
    const auto period = b.config.tick_period_us();
    auto r = spine_tick(b, at(0.08, t), at(0.08, t), LockCommand::unlock, t);
    CHECK(r.bundle.state.phase == LockPhase::unlock_pending);
    b = r.bundle;
    // g = 0, 0.002, 0.0055, then 0.009 > h.
    const double ramp[] = {0.078, 0.076, 0.0745, 0.0745};
    for (int i = 0; i < 4; ++i) {
      t += period;
      r = spine_tick(b, at(ramp[i], t), at(ramp[i], t), std::nullopt, t);
      b = r.bundle;
      CHECK(r.snapshot.alarm == (i == 3));
      CHECK((r.action.kind == PinAction::Kind::retract) == (i == 3));
    }
    CHECK(b.state == LockState::unlocked());
  }
  SUBCASE("sensor dropout during the pending phase never alarms") {
    auto b = locked_bundle(0.08);
    b = spine_tick(b, at(0.08), at(0.08), LockCommand::unlock, 0).bundle;
    for (int i = 1; i <= 200; ++i) {
      const auto r = spine_tick(b, SensorReading::invalid(), SensorReading::invalid(), std::nullopt,
                                i * b.config.tick_period_us());
      REQUIRE_FALSE(r.snapshot.alarm);
      REQUIRE(r.snapshot.health == SensorHealth::degraded_hold);
      b = r.bundle;
    }
    CHECK(b.state.phase == LockPhase::unlock_pending);
  }
  SUBCASE("latest command stands until replaced") {
    auto b = SpineBundle::make(SpineControllerConfig::defaults(ScissorGeometry{}), LockState::unlocked(), 0.15);
    b = spine_tick(b, at(0.15), at(0.15), LockCommand::lock, 0).bundle;
    CHECK(b.state.phase == LockPhase::lock_pending);
    b = spine_tick(b, at(0.1405), at(0.1405), std::nullopt, 10000).bundle;
    CHECK(b.state == LockState::locked(0.14));
  }
}

TEST_CASE("replay log parsing and idempotence") {
  std::ifstream in(SPQ_FIXTURES "/replay_unlock.csv");
  REQUIRE(in);
  const auto rows = parse_replay_csv(in);
  REQUIRE(rows.size() == 12);
  CHECK_FALSE(rows[5].sensor_b_mm.has_value());
  CHECK(rows[1].command == LockCommand::unlock);

  const auto start = locked_bundle(0.08);
  std::ostringstream first, second;
  const auto end = replay_log(start, rows, first);
  replay_log(start, rows, second);
  CHECK(first.str() == second.str());
  CHECK(end.state == LockState::unlocked());

  std::ifstream golden_in(SPQ_FIXTURES "/replay_unlock_trace.csv");
  REQUIRE(golden_in);
  std::stringstream golden;
  golden << golden_in.rdbuf();
  CHECK(first.str() == golden.str());

  std::istringstream bad("tick,sensor_a_mm,sensor_b_mm,cmd\n0,80,80\n");
  CHECK_THROWS_AS(parse_replay_csv(bad), ConfigError);
  std::istringstream bad_cmd("0,80,80,9\n");
  CHECK_THROWS_AS(parse_replay_csv(bad_cmd), ConfigError);
}
