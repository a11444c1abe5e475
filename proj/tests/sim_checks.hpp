#pragma once

// Physics checks shared by the simulator unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <random>

#include "spq/quadruped_sim.hpp"

namespace spq::testing {

struct DriftResult {
  double max_relative = 0.0;  // max |E(t) - E(0)| / |E(0)|, gravity measured from the ground
  double max_kinetic_relative = 0.0;  // same drift over the initial kinetic energy
  double duration = 0.0;      // simulated time before the run ended
  double lowest_foot = 1e300;
  bool hit_stop = false;
};

// Airborne state: stand posture 1.5 m up, tumbling and moving.
inline RobotState airborne_state(const SimModel& model, double s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RobotState state = standing_state(model, JumpControllerConfig{});
  state.q[dof::z] = 1.5;
  state.q[dof::s] = s;
  state.q[dof::phi] = 0.2 * u(rng);
  state.qd[dof::x] = 0.5 * u(rng);
  state.qd[dof::z] = 1.0 + 0.5 * u(rng);
  state.qd[dof::phi] = 1.0 * u(rng);
  for (int i = dof::front_hip; i <= dof::rear_knee; ++i) state.qd[i] = 2.0 * u(rng);
  return state;
}

// Unforced flight, stopping early when a compliant spine reaches an end stop
// if `until_stop` is set.
inline DriftResult free_flight_drift(const SimModel& model, RobotState state, double duration,
                                     double dt, bool pinned, bool until_stop = false) {
  DriftResult out;
  const double e0 = mechanical_energy(state, model).mechanical();
  const double k0 = mechanical_energy(state, model).kinetic;
  const auto steps = static_cast<long>(std::llround(duration / dt));
  for (long i = 0; i < steps; ++i) {
    const auto report = dynamics_step(state, {0.0, 0.0, 0.0, 0.0}, model, pinned, dt);
    if (report.spine_at_stop) {
      out.hit_stop = true;
      if (until_stop) break;
    }
    state = report.state;
    const double e = mechanical_energy(state, model).mechanical();
    out.max_relative = std::max(out.max_relative, std::abs(e - e0) / std::abs(e0));
    out.max_kinetic_relative = std::max(out.max_kinetic_relative, std::abs(e - e0) / k0);
    out.duration = state.t;
    for (const auto side : {LegSide::front, LegSide::rear}) {
      out.lowest_foot = std::min(out.lowest_foot, foot_point(state, side, model).position.y());
    }
  }
  return out;
}

// Largest |analytic - central difference| over the foot Jacobian of both legs.
inline double foot_jacobian_error(const SimModel& model, const RobotState& state, double step = 1e-6) {
  double worst = 0.0;
  for (const auto side : {LegSide::front, LegSide::rear}) {
    const auto analytic = foot_point(state, side, model).jacobian;
    for (int j = 0; j < 8; ++j) {
      RobotState plus = state, minus = state;
      plus.q[j] += step;
      minus.q[j] -= step;
      const Eigen::Vector2d fd =
          (foot_point(plus, side, model).position - foot_point(minus, side, model).position) / (2 * step);
      worst = std::max(worst, (fd - analytic.col(j)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

inline double leg_jacobian_error(double hip, double knee, const RobotParams& params, double step = 1e-6) {
  const auto analytic = leg_kinematics(hip, knee, params).jacobian;
  const Eigen::Vector2d d_hip =
      (leg_kinematics(hip + step, knee, params).foot - leg_kinematics(hip - step, knee, params).foot) / (2 * step);
  const Eigen::Vector2d d_knee =
      (leg_kinematics(hip, knee + step, params).foot - leg_kinematics(hip, knee - step, params).foot) / (2 * step);
  return std::max((d_hip - analytic.col(0)).cwiseAbs().maxCoeff(),
                  (d_knee - analytic.col(1)).cwiseAbs().maxCoeff());
}

inline SimModel model_with(SpineMode mode, double damping = 5.0) {
  SimModel model;
  model.spine.mode = mode;
  model.spine.damping = damping;
  return model;
}

}  // namespace spq::testing
