#include "spq/quadruped_sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include <Eigen/LU>
#include <fmt/format.h>

namespace spq {

namespace {

constexpr int kFrontLegBase = dof::front_hip;
constexpr int kRearLegBase = dof::rear_hip;

int leg_base(LegSide side) { return side == LegSide::front ? kFrontLegBase : kRearLegBase; }

// x mirror applied to the front leg.
double leg_sign(LegSide side) { return side == LegSide::front ? -1.0 : 1.0; }

Eigen::Matrix2d rotation(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Eigen::Vector2d axis(double phi) { return {std::cos(phi), std::sin(phi)}; }
Eigen::Vector2d normal_axis(double phi) { return {-std::sin(phi), std::cos(phi)}; }

// Spine extension at which the compliant spine's travel ends.
double upper_stop(const SpineSetup& spine) {
  return std::min(spine.config.geometry().h_max, spine.config.h0());
}

double saturate(double value, double limit) { return std::clamp(value, -limit, limit); }

}  // namespace

void RobotParams::validate() const {
  const std::array positives{m_half, m_batt, m_rspine, m_cspine, l_ulimb, l_llimb, m_ulimb,
                             m_llimb, tau_shaft_peak, rigid_spine_length, body_hip_span,
                             box_length, box_height, joint_inertia, gravity};
  for (const double value : positives) {
    if (!(value > 0.0)) throw ConfigError("robot masses, lengths and inertias must be positive");
  }
  if (!(torque_cap_fraction > 0.0 && torque_cap_fraction <= 1.0)) {
    throw ConfigError("torque_cap_fraction must lie in (0, 1]");
  }
  if (legs_per_side < 1) throw ConfigError("legs_per_side must be >= 1");
}

double RobotParams::half_mass(SpineMode mode) const {
  const double spine = mode == SpineMode::rigid ? m_rspine : m_cspine;
  return m_half + m_batt + legs_per_side * (m_ulimb + m_llimb) + 0.5 * spine;
}

double RobotParams::half_pitch_inertia(SpineMode mode) const {
  return half_mass(mode) * (box_length * box_length + box_height * box_height) / 12.0;
}

void ContactModel::validate() const {
  if (!(k_n > 0.0) || !(c_n > 0.0)) throw ConfigError("contact k_n and c_n must be positive");
  if (!(mu >= 0.0)) throw ConfigError("friction coefficient must be >= 0");
  if (!(v_slip_eps > 0.0)) throw ConfigError("v_slip_eps must be positive");
}

void SimModel::validate() const {
  params.validate();
  contact.validate();
  if (!(spine.damping >= 0.0)) throw ConfigError("spine damping must be >= 0");
}

double SimModel::hip_separation(double s) const {
  if (spine.mode == SpineMode::rigid) return params.body_hip_span + params.rigid_spine_length + s;
  return params.body_hip_span + spine.config.geometry().delta_h + s;
}

bool RobotState::finite() const { return q.allFinite() && qd.allFinite() && std::isfinite(t); }

std::string RobotState::dump() const {
  return fmt::format("t={} q=[{}] qd=[{}]", t,
                     fmt::join(q.data(), q.data() + q.size(), ", "),
                     fmt::join(qd.data(), qd.data() + qd.size(), ", "));
}

LegKinematics leg_kinematics(double hip, double knee, const RobotParams& params) {
  const double l1 = params.l_ulimb;
  const double l2 = params.l_llimb;
  const double sh = std::sin(hip);
  const double ch = std::cos(hip);
  const double shk = std::sin(hip + knee);
  const double chk = std::cos(hip + knee);
  LegKinematics out;
  out.foot = {l1 * sh + l2 * shk, -l1 * ch - l2 * chk};
  out.jacobian << l1 * ch + l2 * chk, l2 * chk,
                  l1 * sh + l2 * shk, l2 * shk;
  return out;
}

std::array<double, 2> leg_inverse_kinematics(const Eigen::Vector2d& foot,
                                             const RobotParams& params) {
  const double l1 = params.l_ulimb;
  const double l2 = params.l_llimb;
  const double r2 = foot.squaredNorm();
  const double cos_knee = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (cos_knee > 1.0 + 1e-12 || cos_knee < -1.0 - 1e-12) {
    throw DomainError(fmt::format("foot target ({}, {}) out of leg reach", foot.x(), foot.y()));
  }
  const double knee = -std::acos(std::clamp(cos_knee, -1.0, 1.0));
  const double direction = std::atan2(foot.x(), -foot.y());
  const double offset = std::atan2(l2 * std::sin(knee), l1 + l2 * std::cos(knee));
  return {direction - offset, knee};
}

Eigen::Vector2d contact_forces(const Eigen::Vector2d& foot_pos, const Eigen::Vector2d& foot_vel,
                               const ContactModel& contact) {
  if (foot_pos.y() > 0.0) return Eigen::Vector2d::Zero();
  const double normal =
      std::max(0.0, -contact.k_n * foot_pos.y() - contact.c_n * foot_vel.y());
  const double slip = std::clamp(foot_vel.x() / contact.v_slip_eps, -1.0, 1.0);
  return {-contact.mu * normal * slip, normal};
}

double spine_joint_force(double s, double sdot, SpineMode mode, const SpineConfig& config,
                         double damping) {
  if (mode != SpineMode::compliant) return 0.0;
  return spine_force(s, config) - damping * sdot;
}

double clamp_joint_torque(double requested, const RobotParams& params) {
  return saturate(requested, params.joint_torque_cap());
}

FootPoint foot_point(const RobotState& state, LegSide side, const SimModel& model) {
  const double phi = state.q[dof::phi];
  const int base = leg_base(side);
  const double sign = leg_sign(side);
  const auto leg = leg_kinematics(state.q[base], state.q[base + 1], model.params);

  Eigen::Matrix2d mirror = Eigen::Matrix2d::Identity();
  mirror(0, 0) = sign;
  const Eigen::Matrix2d rot = rotation(phi);
  Eigen::Matrix2d rot_dphi;
  rot_dphi << -std::sin(phi), -std::cos(phi), std::cos(phi), -std::sin(phi);
  const Eigen::Vector2d local = mirror * leg.foot;

  FootPoint out;
  out.jacobian.setZero();
  out.jacobian.block<2, 2>(0, dof::x).setIdentity();
  Eigen::Vector2d hip(state.q[dof::x], state.q[dof::z]);
  Eigen::Vector2d hip_dphi = Eigen::Vector2d::Zero();
  if (side == LegSide::front) {
    const double sep = model.hip_separation(state.q[dof::s]);
    hip += sep * axis(phi);
    hip_dphi = sep * normal_axis(phi);
    out.jacobian.col(dof::s) = axis(phi);
  }
  out.jacobian.col(dof::phi) = hip_dphi + rot_dphi * local;
  out.jacobian.block<2, 2>(0, base) = rot * mirror * leg.jacobian;
  out.position = hip + rot * local;
  out.velocity = out.jacobian * state.qd;
  return out;
}

std::array<Eigen::Vector2d, 2> body_positions(const RobotState& state, const SimModel& model) {
  const Eigen::Vector2d rear(state.q[dof::x], state.q[dof::z]);
  const Eigen::Vector2d front =
      rear + model.hip_separation(state.q[dof::s]) * axis(state.q[dof::phi]);
  return {rear, front};
}

Eigen::Vector2d body_midpoint(const RobotState& state, const SimModel& model) {
  const auto bodies = body_positions(state, model);
  return 0.5 * (bodies[0] + bodies[1]);
}

Eigen::Vector2d body_midpoint_velocity(const RobotState& state, const SimModel& model) {
  const double phi = state.q[dof::phi];
  const Eigen::Vector2d rear(state.qd[dof::x], state.qd[dof::z]);
  const Eigen::Vector2d front = rear + state.qd[dof::s] * axis(phi) +
                                model.hip_separation(state.q[dof::s]) * state.qd[dof::phi] *
                                    normal_axis(phi);
  return 0.5 * (rear + front);
}

namespace {

// Jacobian of the front half-body center.
Eigen::Matrix<double, 2, 8> front_body_jacobian(const RobotState& state, const SimModel& model) {
  const double phi = state.q[dof::phi];
  Eigen::Matrix<double, 2, 8> jac = Eigen::Matrix<double, 2, 8>::Zero();
  jac.block<2, 2>(0, dof::x).setIdentity();
  jac.col(dof::phi) = model.hip_separation(state.q[dof::s]) * normal_axis(phi);
  jac.col(dof::s) = axis(phi);
  return jac;
}

}  // namespace

Eigen::Matrix<double, 8, 8> mass_matrix(const RobotState& state, const SimModel& model) {
  const SpineMode mode = model.spine.mode;
  const double m = model.params.half_mass(mode);
  Eigen::Matrix<double, 2, 8> rear_jac = Eigen::Matrix<double, 2, 8>::Zero();
  rear_jac.block<2, 2>(0, dof::x).setIdentity();
  const auto front_jac = front_body_jacobian(state, model);

  Eigen::Matrix<double, 8, 8> mass = m * (rear_jac.transpose() * rear_jac) +
                                     m * (front_jac.transpose() * front_jac);
  mass(dof::phi, dof::phi) += 2.0 * model.params.half_pitch_inertia(mode);
  for (int i = dof::front_hip; i <= dof::rear_knee; ++i) mass(i, i) += model.params.joint_inertia;
  return mass;
}

namespace {

struct Solve {
  Vec8 qdd;
  std::array<double, 2> tangential{};
};

// Solves M qdd = rhs + friction for one step. When `prescribed_sdd` is set
// the spine row is replaced by that acceleration. Friction is evaluated at the
// end-of-step slip velocity, foot by foot, with Gauss-Seidel sweeps.
Solve solve_step(const Eigen::Matrix<double, 8, 8>& mass, const Vec8& rhs,
                 const std::array<FootPoint, 2>& feet, const std::array<double, 2>& normal,
                 const Vec8& qd, const ContactModel& contact,
                 std::optional<double> prescribed_sdd, double dt) {
  Eigen::Matrix<double, 8, 8> system = mass;
  Vec8 base = rhs;
  Vec8 keep = Vec8::Ones();
  if (prescribed_sdd) {
    system.row(dof::s).setZero();
    system(dof::s, dof::s) = 1.0;
    base[dof::s] = *prescribed_sdd;
    keep[dof::s] = 0.0;
  }
  const Eigen::PartialPivLU<Eigen::Matrix<double, 8, 8>> lu(system);

  Solve out;
  const Vec8 free_qdd = lu.solve(base);
  std::array<Vec8, 2> response;
  std::array<Eigen::Matrix<double, 1, 8>, 2> rows;
  std::array<double, 2> v_free{};
  for (int i = 0; i < 2; ++i) {
    rows[i] = feet[i].jacobian.row(0);
    response[i] = lu.solve(rows[i].transpose().cwiseProduct(keep));
    v_free[i] = rows[i].dot(qd + dt * free_qdd);
  }
  // Delassus operator for the tangential directions.
  double w[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) w[i][k] = dt * rows[i].dot(response[k]);
  }

  std::array<double, 2> force{};
  for (int sweep = 0; sweep < 50; ++sweep) {
    double change = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double cap = contact.mu * normal[i];
      double updated = 0.0;
      if (cap > 0.0) {
        const double v0 = v_free[i] + w[i][1 - i] * force[1 - i];
        const double viscous = cap / contact.v_slip_eps;
        const double v_stick = v0 / (1.0 + w[i][i] * viscous);
        updated = std::abs(v_stick) <= contact.v_slip_eps ? -viscous * v_stick
                                                           : -cap * (v0 > 0.0 ? 1.0 : -1.0);
      }
      change = std::max(change, std::abs(updated - force[i]));
      force[i] = updated;
    }
    if (change < 1e-12) break;
  }

  out.qdd = free_qdd + force[0] * response[0] + force[1] * response[1];
  out.tangential = force;
  return out;
}

}  // namespace

StepReport dynamics_step(const RobotState& state, const JointTorques& torques,
                         const SimModel& model, bool spine_pinned, double dt) {
  if (!(dt > 0.0 && dt <= 1e-3)) throw ConfigError(fmt::format("dt {} outside (0, 1e-3]", dt));
  const SpineMode mode = model.spine.mode;
  const double m = model.params.half_mass(mode);
  const double g = model.params.gravity;
  const double phi = state.q[dof::phi];
  const double sep = model.hip_separation(state.q[dof::s]);
  const double sdot = state.qd[dof::s];
  const double phidot = state.qd[dof::phi];

  const auto mass = mass_matrix(state, model);
  const auto front_jac = front_body_jacobian(state, model);

  // Velocity-product acceleration of the front half-body.
  const Eigen::Vector2d bias_acc =
      2.0 * sdot * phidot * normal_axis(phi) - sep * phidot * phidot * axis(phi);
  Vec8 rhs = -m * front_jac.transpose() * bias_acc;

  // Gravity on both half-bodies.
  rhs[dof::z] -= m * g;
  rhs += -m * g * front_jac.row(1).transpose();

  StepReport report;
  const bool frozen = mode == SpineMode::rigid || spine_pinned;
  try {
    report.spine_force = mode == SpineMode::rigid
                             ? 0.0
                             : spine_force(state.q[dof::s], model.spine.config) -
                                   (frozen ? 0.0 : model.spine.damping * sdot);
  } catch (const DomainError& e) {
    throw SimFault(fmt::format("spine left its force-law domain: {}", e.what()), state.dump());
  }
  if (!frozen) rhs[dof::s] += report.spine_force;

  rhs[dof::front_hip] += torques[0];
  rhs[dof::front_knee] += torques[1];
  rhs[dof::rear_hip] += torques[2];
  rhs[dof::rear_knee] += torques[3];

  const std::array feet{foot_point(state, LegSide::front, model),
                        foot_point(state, LegSide::rear, model)};
  std::array<double, 2> normal{};
  for (int i = 0; i < 2; ++i) {
    normal[i] = contact_forces(feet[i].position, feet[i].velocity, model.contact).y();
    rhs += feet[i].jacobian.row(1).transpose() * normal[i];
  }

  std::optional<double> prescribed;
  if (frozen) prescribed = -sdot / dt;
  Solve solved = solve_step(mass, rhs, feet, normal, state.qd, model.contact, prescribed, dt);

  if (!frozen) {
    const double lo = model.spine.config.geometry().h_min;
    const double hi = upper_stop(model.spine);
    const double s_next = state.q[dof::s] + dt * (sdot + dt * solved.qdd[dof::s]);
    std::optional<double> stop;
    if (s_next > hi) stop = hi;
    if (s_next < lo) stop = lo;
    if (stop) {
      report.spine_at_stop = true;
      const double target_rate = (*stop - state.q[dof::s]) / dt;
      solved = solve_step(mass, rhs - report.spine_force * Vec8::Unit(dof::s), feet, normal,
                          state.qd, model.contact, (target_rate - sdot) / dt, dt);
    }
  }

  report.state = state;
  report.state.qd += dt * solved.qdd;
  report.state.q += dt * report.state.qd;
  report.state.t += dt;
  if (frozen) {
    report.state.qd[dof::s] = 0.0;
    report.state.q[dof::s] = state.q[dof::s];
  }
  for (int i = 0; i < 2; ++i) report.foot_forces[i] = {solved.tangential[i], normal[i]};

  if (!report.state.finite()) {
    throw SimFault("non-finite state after dynamics step", report.state.dump());
  }
  return report;
}

EnergyTerms mechanical_energy(const RobotState& state, const SimModel& model) {
  EnergyTerms terms;
  terms.kinetic = 0.5 * state.qd.dot(mass_matrix(state, model) * state.qd);
  const auto bodies = body_positions(state, model);
  terms.gravity =
      model.params.half_mass(model.spine.mode) * model.params.gravity * (bodies[0].y() + bodies[1].y());
  if (model.spine.mode != SpineMode::rigid) {
    const double h0 = std::min(model.spine.config.h0(), max_reach(model.spine.config.geometry()));
    terms.spine = stored_elastic_energy(state.q[dof::s], h0, model.spine.config);
  }
  for (const auto side : {LegSide::front, LegSide::rear}) {
    const double z = foot_point(state, side, model).position.y();
    if (z < 0.0) terms.contact += 0.5 * model.contact.k_n * z * z;
  }
  return terms;
}

// ---------------------------------------------------------------------------
// Jump controller

namespace {

std::array<double, 2> posture(double height, const RobotParams& params) {
  return leg_inverse_kinematics(Eigen::Vector2d(0.0, -height), params);
}

void pd_to(JointTorques& torques, const RobotState& state, LegSide side,
           const std::array<double, 2>& target, double kp, double kd) {
  const int base = leg_base(side);
  const int slot = side == LegSide::front ? 0 : 2;
  for (int j = 0; j < 2; ++j) {
    torques[slot + j] = kp * (target[j] - state.q[base + j]) - kd * state.qd[base + j];
  }
}

double leg_length(const RobotState& state, LegSide side, const RobotParams& params) {
  const int base = leg_base(side);
  return leg_kinematics(state.q[base], state.q[base + 1], params).foot.norm();
}

ControlOutput enter(ControlOutput out, JumpPhase phase, double t) {
  out.fsm.phase = phase;
  out.fsm.phase_entry_time = t;
  out.fsm.unloaded_steps = 0;
  return out;
}

}  // namespace

ControlOutput jump_controller_step(const JumpFsm& fsm, const RobotState& state,
                                   const ControllerInputs& inputs, const SimModel& model,
                                   const JumpControllerConfig& config) {
  const RobotParams& params = model.params;
  ControlOutput out;
  out.fsm = fsm;
  out.lock_command = model.spine.mode == SpineMode::compliant ? LockCommand::stay_unlocked
                                                              : LockCommand::stay_locked;
  const double elapsed = state.t - fsm.phase_entry_time;
  const bool loaded = inputs.normal_forces[0] > 0.0 || inputs.normal_forces[1] > 0.0;

  // Phase transitions first; the torques below use the resulting phase.
  switch (fsm.phase) {
    case JumpPhase::crouch:
      if (elapsed >= config.crouch_time) out = enter(out, JumpPhase::thrust, state.t);
      break;
    case JumpPhase::thrust:
      out.fsm.unloaded_steps = loaded ? 0 : fsm.unloaded_steps + 1;
      if (out.fsm.unloaded_steps >= config.liftoff_steps) {
        out = enter(out, JumpPhase::flight, state.t);
      } else if (elapsed > config.liftoff_timeout) {
        out = enter(out, JumpPhase::done, state.t);
      }
      break;
    case JumpPhase::flight:
      if (loaded) out = enter(out, JumpPhase::land, state.t);
      break;
    case JumpPhase::land: {
      const double vz = body_midpoint_velocity(state, model).y();
      if ((elapsed >= config.settle_time && std::abs(vz) < config.settle_speed) ||
          elapsed > config.land_timeout) {
        out = enter(out, JumpPhase::done, state.t);
      }
      break;
    }
    case JumpPhase::done:
      break;
  }

  JointTorques& tau = out.torques;
  const double sagittal_cap = params.legs_per_side * params.joint_torque_cap();
  switch (out.fsm.phase) {
    case JumpPhase::crouch:
      for (const auto side : {LegSide::front, LegSide::rear}) {
        pd_to(tau, state, side, posture(config.crouch_height, params), config.kp, config.kd);
      }
      break;
    case JumpPhase::thrust: {
      // Push the feet straight down in the world frame with the largest
      // torque the cap allows, until a leg reaches its extension limit.
      const std::array sides{LegSide::front, LegSide::rear};
      double largest = 0.0;
      for (int i = 0; i < 2; ++i) {
        const auto foot = foot_point(state, sides[i], model);
        const int base = leg_base(sides[i]);
        for (int j = 0; j < 2; ++j) {
          tau[2 * i + j] = -foot.jacobian(1, base + j);
          largest = std::max(largest, std::abs(tau[2 * i + j]));
        }
      }
      const double scale = largest > 0.0 ? config.thrust_scale * sagittal_cap / largest : 0.0;
      for (auto& value : tau) value *= scale;
      for (int i = 0; i < 2; ++i) {
        if (leg_length(state, sides[i], params) >= config.extension_limit) {
          pd_to(tau, state, sides[i], posture(config.extension_limit, params), config.kp,
                config.kd);
        }
      }
      break;
    }
    case JumpPhase::flight:
      for (const auto side : {LegSide::front, LegSide::rear}) {
        pd_to(tau, state, side, posture(config.landing_height, params), config.kp, config.kd);
      }
      break;
    case JumpPhase::land:
      for (const auto side : {LegSide::front, LegSide::rear}) {
        pd_to(tau, state, side, posture(config.stand_height, params), config.land_kp,
              config.land_kd);
      }
      break;
    case JumpPhase::done:
      tau.fill(0.0);
      break;
  }
  // Each sagittal joint drives legs_per_side physical joints.
  for (auto& value : tau) {
    value = params.legs_per_side * clamp_joint_torque(value / params.legs_per_side, params);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trials

RobotState standing_state(const SimModel& model, const JumpControllerConfig& config) {
  RobotState state;
  const auto joints = posture(config.stand_height, model.params);
  state.q[dof::front_hip] = state.q[dof::rear_hip] = joints[0];
  state.q[dof::front_knee] = state.q[dof::rear_knee] = joints[1];
  switch (model.spine.mode) {
    case SpineMode::rigid: state.q[dof::s] = 0.0; break;
    case SpineMode::compliant: state.q[dof::s] = upper_stop(model.spine); break;
    case SpineMode::locked: {
      const auto holes = evenly_spaced_holes(model.spine.config.geometry());
      state.q[dof::s] = nearest_hole(upper_stop(model.spine), holes);
      break;
    }
  }
  const double weight = 2.0 * model.params.half_mass(model.spine.mode) * model.params.gravity;
  const double sink = 0.5 * weight / model.contact.k_n;
  state.q[dof::z] = config.stand_height - sink;
  return state;
}

namespace {

RobotState tilt_about_midpoint(const RobotState& state, const SimModel& model, double delta) {
  RobotState out = state;
  const Eigen::Vector2d mid = body_midpoint(state, model);
  const Eigen::Vector2d mid_vel = body_midpoint_velocity(state, model);
  const double phi = state.q[dof::phi] + delta;
  const double sep = model.hip_separation(state.q[dof::s]);
  const Eigen::Vector2d rear = mid - 0.5 * sep * axis(phi);
  const Eigen::Vector2d rear_vel =
      mid_vel - 0.5 * (state.qd[dof::s] * axis(phi) + sep * state.qd[dof::phi] * normal_axis(phi));
  out.q[dof::phi] = phi;
  out.q[dof::x] = rear.x();
  out.q[dof::z] = rear.y();
  out.qd[dof::x] = rear_vel.x();
  out.qd[dof::z] = rear_vel.y();
  return out;
}

}  // namespace

TrialResult run_jump_trial(const SimModel& model, const TrialOptions& options) {
  model.validate();
  if (options.log_every < 1) throw ConfigError("log_every must be >= 1");

  // Per-trial variation: crouch timing, thrust effort and tilt magnitude.
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  JumpControllerConfig config = options.controller;
  config.crouch_time *= 0.95 + 0.10 * unit(rng);
  config.thrust_scale *= 0.93 + 0.07 * unit(rng);
  const double tilt = options.tilt * (0.85 + 0.30 * unit(rng));

  TrialResult result;
  JumpMetrics& metrics = result.metrics;
  RobotState state = standing_state(model, config);
  const double stance_height = body_midpoint(state, model).y();

  auto lock_config = SpineControllerConfig::defaults(model.spine.config.geometry());
  const LockState initial_lock = model.spine.mode == SpineMode::locked
                                     ? LockState::locked(nearest_hole(state.q[dof::s], lock_config.holes))
                                     : LockState::unlocked();
  SpineBundle lock = SpineBundle::make(lock_config, initial_lock, state.q[dof::s]);
  const auto steps_per_tick =
      std::max<std::int64_t>(1, std::llround(1.0 / (lock_config.tick_hz * options.dt)));

  JumpFsm fsm;
  ControllerInputs inputs;
  bool tilted = false;
  bool touched_down = false;
  bool lifted_off = false;
  double max_mid_z = stance_height;
  double prev_front_x = 0.0;
  const auto steps = static_cast<std::int64_t>(std::ceil(options.max_duration / options.dt));

  try {
    for (std::int64_t step = 0; step < steps; ++step) {
      const auto control = jump_controller_step(fsm, state, inputs, model, config);
      if (control.fsm.phase == JumpPhase::flight) lifted_off = true;
      if (control.fsm.phase == JumpPhase::land && fsm.phase == JumpPhase::flight) {
        touched_down = true;
        metrics.touchdown_spine_length = state.q[dof::s];
        metrics.min_spine_length = state.q[dof::s];
        prev_front_x = foot_point(state, LegSide::front, model).position.x();
      }
      fsm = control.fsm;
      if (fsm.phase == JumpPhase::done) break;

      if (model.spine.mode != SpineMode::rigid && step % steps_per_tick == 0) {
        const auto now = lock.tick * lock_config.tick_period_us();
        const SensorReading reading{state.q[dof::s], now};
        lock = spine_tick(lock, reading, reading, control.lock_command, now).bundle;
      }
      const bool pinned = model.spine.mode == SpineMode::rigid || lock.state.pinned();

      const double vz_before = body_midpoint_velocity(state, model).y();
      const auto report = dynamics_step(state, control.torques, model, pinned, options.dt);
      state = report.state;
      for (int i = 0; i < 2; ++i) {
        inputs.normal_forces[i] = report.foot_forces[i].y();
        const double excess = std::abs(report.foot_forces[i].x()) -
                              model.contact.mu * report.foot_forces[i].y();
        result.worst_cone_excess = std::max(result.worst_cone_excess, excess);
      }

      const Eigen::Vector2d mid = body_midpoint(state, model);
      const double vz = body_midpoint_velocity(state, model).y();
      max_mid_z = std::max(max_mid_z, mid.y());
      metrics.max_vz = std::max(metrics.max_vz, vz);

      if (options.scenario == JumpScenario::tilted_landing && fsm.phase == JumpPhase::flight &&
          !tilted && vz <= 0.0) {
        state = tilt_about_midpoint(state, model, -tilt);
        tilted = true;
      }
      if (touched_down) {
        metrics.peak_landing_decel = std::max(metrics.peak_landing_decel, (vz - vz_before) / options.dt);
        metrics.min_spine_length = std::min(metrics.min_spine_length, state.q[dof::s]);
        const double front_x = foot_point(state, LegSide::front, model).position.x();
        if (report.foot_forces[0].y() > 0.0) metrics.front_foot_slip += std::abs(front_x - prev_front_x);
        prev_front_x = front_x;
      }
      if (step % options.log_every == 0) {
        result.log.push_back({state.t, state.q, state.qd, report.foot_forces, report.spine_force,
                              fsm.phase, lock.state.phase});
      }
    }
  } catch (const SimFault& fault) {
    result.fault = fmt::format("{} [{}]", fault.what(), fault.dump());
  }

  metrics.max_height = std::max(0.0, max_mid_z - stance_height);
  metrics.success = !result.fault && lifted_off && touched_down && fsm.phase == JumpPhase::done &&
                    std::abs(state.q[dof::phi]) < 0.6;
  return result;
}

void write_trial_log_csv(std::ostream& out, const std::vector<LogRow>& log) {
  out << "t,x,z,phi,s,th_hf,tk_hf,th_hr,tk_hr,"
         "xd,zd,phid,sd,th_hf_d,tk_hf_d,th_hr_d,tk_hr_d,"
         "front_ft,front_fn,rear_ft,rear_fn,spine_force,phase,lock\n";
  for (const auto& row : log) {
    out << fmt::format("{:.6f},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{},{}\n", row.t,
                       fmt::join(row.q.data(), row.q.data() + 8, ","),
                       fmt::join(row.qd.data(), row.qd.data() + 8, ","), row.foot_forces[0].x(),
                       row.foot_forces[0].y(), row.foot_forces[1].x(), row.foot_forces[1].y(),
                       row.spine_force, to_string(row.phase), to_string(row.lock));
  }
}

std::string_view to_string(SpineMode mode) {
  switch (mode) {
    case SpineMode::rigid: return "rigid";
    case SpineMode::locked: return "locked";
    case SpineMode::compliant: return "compliant";
  }
  return "?";
}

std::string_view to_string(JumpPhase phase) {
  switch (phase) {
    case JumpPhase::crouch: return "crouch";
    case JumpPhase::thrust: return "thrust";
    case JumpPhase::flight: return "flight";
    case JumpPhase::land: return "land";
    case JumpPhase::done: return "done";
  }
  return "?";
}

std::string_view to_string(JumpScenario scenario) {
  return scenario == JumpScenario::nominal ? "nominal" : "tilted_landing";
}

SpineMode parse_spine_mode(std::string_view text) {
  for (auto mode : {SpineMode::rigid, SpineMode::locked, SpineMode::compliant}) {
    if (text == to_string(mode)) return mode;
  }
  throw ConfigError(fmt::format("unknown spine mode '{}' (rigid|locked|compliant)", text));
}

JumpScenario parse_scenario(std::string_view text) {
  if (text == "nominal") return JumpScenario::nominal;
  if (text == "tilted_landing" || text == "tilted") return JumpScenario::tilted_landing;
  throw ConfigError(fmt::format("unknown scenario '{}' (nominal|tilted_landing)", text));
}

}  // namespace spq
