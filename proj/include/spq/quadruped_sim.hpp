#pragma once

// Sagittal-plane model of the two half-body quadruped joined by the prismatic
// spine, its jump/land controller and per-trial metrics.
//
// Generalized coordinates (indices into RobotState::q):
//   x, z    rear half-body (rear hip) position in the world
//   phi     shared pitch of both half-bodies
//   s       spine extension (0 and frozen for the rigid spine)
//   hip/knee angles of the front and the rear sagittal leg
//
// Each sagittal leg stands for the two physical legs of a half-body. Joint
// angles are zero with the leg pointing straight down; the front leg uses the
// mirrored convention so equal angles give a fore/aft symmetric posture.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "spq/lock_control.hpp"
#include "spq/spine_model.hpp"

namespace spq {

using Vec8 = Eigen::Matrix<double, 8, 1>;

namespace dof {
inline constexpr int x = 0;
inline constexpr int z = 1;
inline constexpr int phi = 2;
inline constexpr int s = 3;
inline constexpr int front_hip = 4;
inline constexpr int front_knee = 5;
inline constexpr int rear_hip = 6;
inline constexpr int rear_knee = 7;
}  // namespace dof

enum class SpineMode : std::uint8_t { rigid, locked, compliant };
enum class LegSide : std::uint8_t { front, rear };

struct RobotParams {
  double m_half = 4.6;
  double m_batt = 0.7;
  double m_rspine = 0.6;
  double m_cspine = 1.2;
  double l_ulimb = 0.1;
  double l_llimb = 0.2;
  double m_ulimb = 0.045;
  double m_llimb = 0.055;
  double tau_shaft_peak = 9.2;
  double torque_cap_fraction = 0.7;
  double rigid_spine_length = 0.23;
  /// Hip-to-hip distance contributed by the two half-bodies themselves.
  double body_hip_span = 0.20;
  /// Half-body box used for the pitch inertia (length x height).
  double box_length = 0.2;
  double box_height = 0.1;
  /// Reflected actuator inertia per sagittal joint, kg m^2.
  double joint_inertia = 0.01;
  int legs_per_side = 2;
  double gravity = 9.81;

  void validate() const;
  /// Torque limit of one physical joint.
  double joint_torque_cap() const { return torque_cap_fraction * tau_shaft_peak; }
  /// Mass of one half-body including lumped limbs and half of the spine.
  double half_mass(SpineMode mode) const;
  /// Pitch inertia of one half-body about its own center.
  double half_pitch_inertia(SpineMode mode) const;
};

struct ContactModel {
  double k_n = 2e4;
  double c_n = 200.0;
  double mu = 0.6;
  double v_slip_eps = 1e-3;

  void validate() const;
};

/// Spine hardware and damping used by the simulator.
struct SpineSetup {
  SpineMode mode = SpineMode::compliant;
  SpineConfig config = SpineConfig::preset("strong");
  double damping = 5.0;  ///< c_s, N s/m
};

struct SimModel {
  RobotParams params;
  ContactModel contact;
  SpineSetup spine;

  void validate() const;
  /// Distance between the hips at spine coordinate s.
  double hip_separation(double s) const;
};

struct RobotState {
  Vec8 q = Vec8::Zero();
  Vec8 qd = Vec8::Zero();
  double t = 0.0;

  bool finite() const;
  std::string dump() const;
};

struct LegKinematics {
  Eigen::Vector2d foot;      ///< foot relative to hip, leg frame
  Eigen::Matrix2d jacobian;  ///< d foot / d (hip, knee)
};

/// Two-link forward kinematics with the analytic Jacobian.
LegKinematics leg_kinematics(double hip, double knee, const RobotParams& params);

/// Hip and knee angles placing the foot at `foot` (leg frame). The knee bends
/// to negative angles. Throws DomainError when out of reach.
std::array<double, 2> leg_inverse_kinematics(const Eigen::Vector2d& foot,
                                             const RobotParams& params);

/// Ground reaction on a foot from the penalty normal law and regularized
/// Coulomb friction. Ground is the plane z = 0.
Eigen::Vector2d contact_forces(const Eigen::Vector2d& foot_pos, const Eigen::Vector2d& foot_vel,
                               const ContactModel& contact);

/// Axial spine force, positive when expanding. Zero for rigid/locked spines,
/// whose coordinate is frozen by the integrator instead. Throws DomainError
/// if a compliant spine is outside the force-law domain.
double spine_joint_force(double s, double sdot, SpineMode mode, const SpineConfig& config,
                         double damping);

/// Clamp a requested physical joint torque to torque_cap_fraction * peak.
double clamp_joint_torque(double requested, const RobotParams& params);

struct FootPoint {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
  Eigen::Matrix<double, 2, 8> jacobian;  ///< d position / d q
};

FootPoint foot_point(const RobotState& state, LegSide side, const SimModel& model);

/// Positions of the two half-body centers (rear, front).
std::array<Eigen::Vector2d, 2> body_positions(const RobotState& state, const SimModel& model);

/// Midpoint of the two half-body centers, and its velocity.
Eigen::Vector2d body_midpoint(const RobotState& state, const SimModel& model);
Eigen::Vector2d body_midpoint_velocity(const RobotState& state, const SimModel& model);

/// Configuration-dependent generalized mass matrix.
Eigen::Matrix<double, 8, 8> mass_matrix(const RobotState& state, const SimModel& model);

/// Joint torques of the sagittal legs, order: front hip, front knee, rear hip,
/// rear knee.
using JointTorques = std::array<double, 4>;

struct StepReport {
  RobotState state;
  std::array<Eigen::Vector2d, 2> foot_forces;  ///< front, rear ground reactions
  double spine_force = 0.0;
  bool spine_at_stop = false;
};

/// One semi-implicit Euler step of length dt (0 < dt <= 1e-3).
///
/// The normal contact force is explicit; the friction law is evaluated at
/// the end-of-step slip velocity. The spine coordinate is frozen when
/// `spine_pinned` or the spine is rigid, and held inside [H_min, H_max] by
/// inelastic end stops otherwise. Torques are applied as given (clamp them
/// beforehand). Throws SimFault on a non-finite result.
StepReport dynamics_step(const RobotState& state, const JointTorques& torques,
                         const SimModel& model, bool spine_pinned, double dt);

struct EnergyTerms {
  double kinetic = 0.0;
  double gravity = 0.0;
  double spine = 0.0;    ///< elastic energy relative to H0
  double contact = 0.0;  ///< penalty spring energy of penetrating feet

  /// kinetic + gravity + spine.
  double mechanical() const { return kinetic + gravity + spine; }
  double with_contact() const { return mechanical() + contact; }
};

EnergyTerms mechanical_energy(const RobotState& state, const SimModel& model);

// ---------------------------------------------------------------------------
// Jump controller

enum class JumpPhase : std::uint8_t { crouch, thrust, flight, land, done };

struct JumpFsm {
  JumpPhase phase = JumpPhase::crouch;
  double phase_entry_time = 0.0;
  int unloaded_steps = 0;
  bool extension_reached = false;
};

struct JumpControllerConfig {
  double stand_height = 0.25;
  double crouch_height = 0.17;
  double landing_height = 0.25;
  /// Thrust stops pushing once the hip-foot distance reaches this.
  double extension_limit = 0.285;
  double crouch_time = 0.6;
  double kp = 60.0;
  double kd = 1.5;
  double land_kp = 60.0;
  double land_kd = 3.0;
  /// Fraction of the torque cap used during thrust.
  double thrust_scale = 1.0;
  int liftoff_steps = 3;
  double liftoff_timeout = 1.0;
  double settle_time = 0.3;
  double settle_speed = 0.05;
  double land_timeout = 1.5;
};

/// What the controller senses each step besides the robot state.
struct ControllerInputs {
  std::array<double, 2> normal_forces{};  ///< front, rear
};

struct ControlOutput {
  JointTorques torques{};  ///< sagittal-joint torques, already clamped
  LockCommand lock_command = LockCommand::stay_unlocked;
  JumpFsm fsm;
};

ControlOutput jump_controller_step(const JumpFsm& fsm, const RobotState& state,
                                   const ControllerInputs& inputs, const SimModel& model,
                                   const JumpControllerConfig& config);

// ---------------------------------------------------------------------------
// Trials

enum class JumpScenario : std::uint8_t { nominal, tilted_landing };

struct TrialOptions {
  JumpScenario scenario = JumpScenario::nominal;
  std::uint64_t seed = 0;
  double dt = 1e-4;
  /// Pitch perturbation applied at the apex (front down) for tilted landings.
  double tilt = 0.1;
  double max_duration = 4.0;
  /// Keep one log row per this many steps (1 = every step).
  int log_every = 1;
  JumpControllerConfig controller;
};

struct JumpMetrics {
  double max_height = 0.0;          ///< midpoint apex above the standing height
  double max_vz = 0.0;
  double peak_landing_decel = 0.0;  ///< largest upward midpoint acceleration after touchdown
  double min_spine_length = 0.0;    ///< smallest s after touchdown
  double touchdown_spine_length = 0.0;
  double front_foot_slip = 0.0;     ///< front-foot travel while loaded after touchdown
  bool success = false;
};

struct LogRow {
  double t = 0.0;
  Vec8 q;
  Vec8 qd;
  std::array<Eigen::Vector2d, 2> foot_forces;
  double spine_force = 0.0;
  JumpPhase phase = JumpPhase::crouch;
  LockPhase lock = LockPhase::unlocked;
};

struct TrialResult {
  JumpMetrics metrics;
  std::vector<LogRow> log;
  /// Largest |f_t| - mu f_n seen at any step (<= 0 when the cone held).
  double worst_cone_excess = 0.0;
  std::optional<std::string> fault;
};

/// Standing start: stand posture, feet resting on the ground.
RobotState standing_state(const SimModel& model, const JumpControllerConfig& config);

/// Runs crouch, thrust, flight and landing to completion. Deterministic for a
/// given seed. A SimFault is caught and reported in `fault` with the partial
/// log.
TrialResult run_jump_trial(const SimModel& model, const TrialOptions& options);

void write_trial_log_csv(std::ostream& out, const std::vector<LogRow>& log);

std::string_view to_string(SpineMode mode);
std::string_view to_string(JumpPhase phase);
std::string_view to_string(JumpScenario scenario);
SpineMode parse_spine_mode(std::string_view text);
JumpScenario parse_scenario(std::string_view text);

}  // namespace spq
