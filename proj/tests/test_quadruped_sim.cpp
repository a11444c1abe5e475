#include <doctest.h>

#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "sim_checks.hpp"

using namespace spq;
using namespace spq::testing;

TEST_CASE("leg kinematics") {
  const RobotParams params;
  const auto straight = leg_kinematics(0.0, 0.0, params);
  CHECK(straight.foot.x() == doctest::Approx(0.0));
  CHECK(straight.foot.y() == doctest::Approx(-0.3));

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> hip(-1.2, 1.2), knee(-2.5, -0.1);
  for (int i = 0; i < 500; ++i) {
    const double h = hip(rng), k = knee(rng);
    REQUIRE(leg_jacobian_error(h, k, params) < 1e-5);
    const auto back = leg_inverse_kinematics(leg_kinematics(h, k, params).foot, params);
    REQUIRE(back[0] == doctest::Approx(h).epsilon(1e-9));
    REQUIRE(back[1] == doctest::Approx(k).epsilon(1e-9));
  }
  CHECK_THROWS_AS(leg_inverse_kinematics({0.0, -0.31}, params), DomainError);
}

TEST_CASE("foot jacobians match finite differences") {
  for (const auto mode : {SpineMode::rigid, SpineMode::compliant}) {
    const auto model = model_with(mode);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto state = airborne_state(model, mode == SpineMode::rigid ? 0.0 : 0.15, seed);
      state.q[dof::front_knee] -= 0.3;
      REQUIRE(foot_jacobian_error(model, state) < 1e-5);
    }
  }
}

TEST_CASE("standing posture is fore/aft symmetric") {
  const auto model = model_with(SpineMode::compliant);
  const auto state = standing_state(model, JumpControllerConfig{});
  const auto bodies = body_positions(state, model);
  const auto front = foot_point(state, LegSide::front, model).position;
  const auto rear = foot_point(state, LegSide::rear, model).position;
  CHECK(front.x() - bodies[1].x() == doctest::Approx(-(rear.x() - bodies[0].x())).epsilon(1e-12));
  CHECK(front.y() == doctest::Approx(rear.y()).epsilon(1e-12));
  CHECK(front.y() < 0.0);
}

TEST_CASE("mass matrix is symmetric positive definite") {
  const auto model = model_with(SpineMode::compliant);
  const auto state = airborne_state(model, 0.12, 4);
  const auto m = mass_matrix(state, model);
  CHECK((m - m.transpose()).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> eig(m);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("contact law") {
  const ContactModel c;
  CHECK(contact_forces({0.0, 0.01}, {1.0, -1.0}, c).isZero());
  const auto resting = contact_forces({0.0, -0.001}, {0.0, 0.0}, c);
  CHECK(resting.y() == doctest::Approx(20.0));
  CHECK(resting.x() == 0.0);
  const auto sliding = contact_forces({0.0, -0.001}, {0.5, 0.0}, c);
  CHECK(sliding.x() == doctest::Approx(-0.6 * 20.0));
  CHECK(contact_forces({0.0, -0.001}, {0.0, 1.0}, c).y() == 0.0);
}

TEST_CASE("torque clamp") {
  const RobotParams params;
  CHECK(params.joint_torque_cap() == doctest::Approx(6.44));
  CHECK(clamp_joint_torque(100.0, params) == doctest::Approx(6.44));
  CHECK(clamp_joint_torque(-100.0, params) == doctest::Approx(-6.44));
  CHECK(clamp_joint_torque(1.0, params) == 1.0);
}

TEST_CASE("spine force inside the simulator") {
  const auto strong = SpineConfig::preset("strong");
  CHECK(spine_joint_force(0.15, 0.0, SpineMode::rigid, strong, 5.0) == 0.0);
  CHECK(spine_joint_force(0.15, 0.0, SpineMode::locked, strong, 5.0) == 0.0);
  CHECK(spine_joint_force(0.15, 0.2, SpineMode::compliant, strong, 5.0) ==
        doctest::Approx(spine_force(0.15, strong) - 1.0));
  CHECK_THROWS_AS(spine_joint_force(0.29, 0.0, SpineMode::compliant, strong, 5.0), DomainError);
}

TEST_CASE("invalid step size") {
  const auto model = model_with(SpineMode::rigid);
  const auto state = standing_state(model, JumpControllerConfig{});
  CHECK_THROWS_AS(dynamics_step(state, {}, model, true, 0.0), ConfigError);
  CHECK_THROWS_AS(dynamics_step(state, {}, model, true, 2e-3), ConfigError);
}

TEST_CASE("free-flight energy is conserved") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto rigid = model_with(SpineMode::rigid);
    const auto r = free_flight_drift(rigid, airborne_state(rigid, 0.0, seed), 0.5, 1e-4, true);
    CHECK(r.lowest_foot > 0.0);
    CHECK(r.max_relative < 1e-3);
    const auto locked = model_with(SpineMode::locked);
    const auto l = free_flight_drift(locked, airborne_state(locked, 0.12, seed), 0.5, 1e-4, true);
    CHECK(l.lowest_foot > 0.0);
    CHECK(l.max_relative < 1e-3);
    // Compliant spine parked on its upper stop.
    const auto compliant = model_with(SpineMode::compliant, 0.0);
    const auto c = free_flight_drift(compliant, airborne_state(compliant, 0.2, seed), 0.5, 1e-4, false);
    CHECK(c.lowest_foot > 0.0);
    CHECK(c.max_relative < 1e-3);
  }
  SUBCASE("undamped spring exchange until the end stop") {
    const auto model = model_with(SpineMode::compliant, 0.0);
    auto state = airborne_state(model, 0.09, 7);
    state.qd[dof::phi] = 0.0;
    const auto drift = free_flight_drift(model, state, 0.5, 1e-4, false, true);
    CHECK(drift.hit_stop);
    CHECK(drift.duration > 0.01);
    CHECK(drift.max_relative < 1e-3);
  }
}

TEST_CASE("free flight is ballistic") {
  const auto model = model_with(SpineMode::compliant);
  auto state = airborne_state(model, 0.2, 3);
  const Eigen::Vector2d v0 = body_midpoint_velocity(state, model);
  const int steps = 2000;
  for (int i = 0; i < steps; ++i) state = dynamics_step(state, {}, model, false, 1e-4).state;
  const Eigen::Vector2d v = body_midpoint_velocity(state, model);
  INFO("vx drift ", v.x() - v0.x(), ", vz error ", v.y() - (v0.y() - 9.81 * steps * 1e-4));
  CHECK(std::abs(v.x() - v0.x()) < 1e-6);
  CHECK(std::abs(v.y() - (v0.y() - 9.81 * steps * 1e-4)) < 1e-6);
}

TEST_CASE("passive landing loses energy") {
  for (const auto mode : {SpineMode::rigid, SpineMode::compliant}) {
    auto model = model_with(mode);
    auto state = standing_state(model, JumpControllerConfig{});
    state.q[dof::z] += 0.05;
    state.qd[dof::x] = 0.3;
    const double e0 = mechanical_energy(state, model).with_contact();
    double previous = e0, worst_rise = 0.0;
    for (int i = 0; i < 5000; ++i) {
      state = dynamics_step(state, {}, model, false, 1e-4).state;
      const double e = mechanical_energy(state, model).with_contact();
      worst_rise = std::max(worst_rise, e - previous);
      previous = e;
    }
    CHECK(worst_rise <= 1e-3);
    CHECK(previous < e0);
  }
}

TEST_CASE("symmetric stance keeps the body level") {
  const auto model = model_with(SpineMode::rigid);
  auto state = standing_state(model, JumpControllerConfig{});
  for (int i = 0; i < 1000; ++i) {
    const double hip = -2.0 * (state.q[dof::rear_hip] - 0.3), knee = 2.0 * (state.q[dof::rear_knee] + 0.6);
    state = dynamics_step(state, {hip, knee, hip, knee}, model, true, 1e-4).state;
    REQUIRE(std::abs(state.q[dof::phi]) < 1e-6);
  }
}

TEST_CASE("locked and free spine agree while the spring is slack") {
  // H0 inside the travel, so the free spine feels no force there.
  SimModel free_model = model_with(SpineMode::compliant);
  free_model.spine.config = SpineConfig::preset("strong", 0.16);
  SimModel locked_model = free_model;
  locked_model.spine.mode = SpineMode::locked;
  auto a = airborne_state(free_model, 0.16, 2);
  a.qd[dof::phi] = 0.0;
  a.q[dof::phi] = 0.0;
  auto b = a;
  for (int i = 0; i < 1000; ++i) {
    a = dynamics_step(a, {0.5, -0.2, 0.1, 0.3}, free_model, false, 1e-4).state;
    b = dynamics_step(b, {0.5, -0.2, 0.1, 0.3}, locked_model, true, 1e-4).state;
  }
  CHECK((a.q - b.q).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.qd - b.qd).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("jump trials") {
  TrialOptions options;
  options.log_every = 1;
  SUBCASE("locked spine never moves") {
    const auto result = run_jump_trial(model_with(SpineMode::locked), options);
    REQUIRE_FALSE(result.fault);
    const double s0 = result.log.front().q[dof::s];
    for (const auto& row : result.log) {
      REQUIRE(row.q[dof::s] == s0);
      REQUIRE(row.qd[dof::s] == 0.0);
      REQUIRE(row.lock == LockPhase::locked);
    }
  }
  SUBCASE("friction stays inside the cone") {
    for (const auto mode : {SpineMode::rigid, SpineMode::compliant}) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        options.seed = seed;
        options.scenario = JumpScenario::tilted_landing;
        const auto result = run_jump_trial(model_with(mode), options);
        REQUIRE_FALSE(result.fault);
        CHECK(result.worst_cone_excess <= 1e-9);
        for (const auto& row : result.log) {
          for (const auto& f : row.foot_forces) REQUIRE(std::abs(f.x()) <= 0.6 * f.y() + 1e-9);
        }
      }
    }
  }
  SUBCASE("same seed, same trial") {
    options.seed = 11;
    options.log_every = 50;
    const auto model = model_with(SpineMode::compliant);
    const auto a = run_jump_trial(model, options);
    const auto b = run_jump_trial(model, options);
    std::ostringstream la, lb;
    write_trial_log_csv(la, a.log);
    write_trial_log_csv(lb, b.log);
    CHECK(la.str() == lb.str());
    CHECK(a.metrics.max_height == b.metrics.max_height);
    CHECK(a.metrics.success);
    CHECK(a.metrics.max_height > 0.0);
    CHECK(a.metrics.min_spine_length <= a.metrics.touchdown_spine_length);
  }
  SUBCASE("bad log stride") {
    options.log_every = 0;
    CHECK_THROWS_AS(run_jump_trial(SimModel{}, options), ConfigError);
  }
}

TEST_CASE("mode and scenario names") {
  CHECK(parse_spine_mode("locked") == SpineMode::locked);
  CHECK(parse_scenario("tilted") == JumpScenario::tilted_landing);
  CHECK_THROWS_AS(parse_spine_mode("floppy"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("sideways"), ConfigError);
}
