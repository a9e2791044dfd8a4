#pragma once

// Single two-joint leg on a frictionless vertical slider.
//
// Generalized coordinates are the hip height z and the joint angles
// q = (hip HFE, knee KFE); angles are measured from the downward vertical,
// the knee relative to the thigh. Links are point masses at their midpoints,
// the slider carriage is a point mass at the hip. Ground contact is a
// penalty spring-damper on the foot point with a saturated viscous
// approximation of Coulomb friction.

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpg_actor/feedback.hpp"

namespace cpg_actor {

using Vec2 = std::array<double, 2>;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PhysicsFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HopperConfig {
  double body_mass = 1.02;
  double thigh_mass = 1.4;
  double shank_mass = 1.0;
  double thigh_length = 0.25;
  double shank_length = 0.33;
  double gravity = 9.81;
  double contact_stiffness = 1e5;   // N/m
  double contact_damping = 1e3;     // N s/m
  double friction = 0.8;            // Coulomb coefficient
  double slip_damping = 300.0;      // N s/m, slope of the regularized friction
  double kp = 60.0;                 // N m/rad
  double kd = 1.5;                  // N m s/rad
  double torque_limit = 40.0;       // N m
  double joint_vel_limit = 15.0;    // rad/s
  double dt_physics = 1e-3;         // s
  int substeps = 10;
  int horizon = 1000;               // control steps
  double min_height = 0.1;
  double max_height = 3.0;
  Vec2 crouch = {-0.2, 0.6};        // rad
  double reset_noise = 0.05;        // rad

  double total_mass() const { return body_mass + thigh_mass + shank_mass; }
  double control_dt() const { return dt_physics * substeps; }
  void validate() const;

  bool operator==(const HopperConfig&) const = default;
};

struct RewardConfig {
  double c1 = 2.0;
  double c2 = -0.5;
  double c3 = -0.005;
  double c4 = -0.0005;
  double c5 = -0.1;

  void validate() const;
  bool operator==(const RewardConfig&) const = default;
};

struct HopperState {
  double z = 0.0;
  double z_dot = 0.0;
  Vec2 q{};
  Vec2 q_dot{};
  bool foot_contact = false;
  Vec2 foot_pos{};  // (x, height)
  Vec2 desired{};   // last commanded joint positions
  int step = 0;

  bool operator==(const HopperState&) const = default;
};

using RewardTerms = std::array<double, 5>;

struct StepInfo {
  Vec2 torque{};             // mean applied (clamped) torque over the control step
  double foot_slip = 0.0;    // mean |foot x velocity| while in contact
  double normal_force = 0.0; // mean normal contact force
};

struct StepResult {
  HopperState state;
  Observation observation{};
  double reward = 0.0;
  RewardTerms terms{};
  bool done = false;
  StepInfo info;
};

struct Accelerations {
  double z_ddot = 0.0;
  Vec2 q_ddot{};
  double normal_force = 0.0;
  double friction_force = 0.0;
};

// Foot position (x, height) and velocity for the given configuration.
Vec2 foot_position(const HopperConfig& cfg, double z, const Vec2& q);
Vec2 foot_velocity(const HopperConfig& cfg, const HopperState& s);

// Accelerations under the given joint torques (unclamped here).
Accelerations accelerations(const HopperConfig& cfg, const HopperState& s, const Vec2& torque);

double mechanical_energy(const HopperConfig& cfg, const HopperState& s);

Vec2 pd_torque(const HopperConfig& cfg, const HopperState& s, const Vec2& desired);

// One physics step of dt_physics with fixed torques (RK4), followed by the
// joint speed clamp.
HopperState integrate_physics(const HopperConfig& cfg, const HopperState& s, const Vec2& torque);

Observation make_observation(const HopperState& s);

RewardTerms compute_reward(const HopperConfig& hopper, const HopperState& before,
                           const HopperState& after, const Vec2& desired, const Vec2& torques,
                           const RewardConfig& cfg);

class HopperEnv {
 public:
  HopperEnv() = default;
  HopperEnv(HopperConfig cfg, RewardConfig reward);

  struct Reset {
    HopperState state;
    Observation observation;
  };

  Reset reset(std::uint64_t seed) const;
  StepResult step(const HopperState& state, const Vec2& desired) const;

  const HopperConfig& config() const { return cfg_; }
  const RewardConfig& reward_config() const { return reward_; }

 private:
  HopperConfig cfg_;
  RewardConfig reward_;
};

// Control-rate trajectory dump.
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(std::ostream& out);
  void initial(const HopperState& s);
  void row(const StepResult& r, double t);

 private:
  std::ostream& out_;
};

}  // namespace cpg_actor
