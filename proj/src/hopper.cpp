#include "cpg_actor/hopper.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace cpg_actor {

namespace {

struct Kinematics {
  double s1, c1, s12, c12;
};

Kinematics kinematics(const Vec2& q) {
  return {std::sin(q[0]), std::cos(q[0]), std::sin(q[0] + q[1]), std::cos(q[0] + q[1])};
}

// Solves the 3x3 symmetric positive definite system m x = b by Cholesky.
std::array<double, 3> solve3(const std::array<std::array<double, 3>, 3>& m,
                             const std::array<double, 3>& b) {
  const double l00 = std::sqrt(m[0][0]);
  const double l10 = m[1][0] / l00;
  const double l20 = m[2][0] / l00;
  const double l11 = std::sqrt(m[1][1] - l10 * l10);
  const double l21 = (m[2][1] - l20 * l10) / l11;
  const double l22 = std::sqrt(m[2][2] - l20 * l20 - l21 * l21);
  const double y0 = b[0] / l00;
  const double y1 = (b[1] - l10 * y0) / l11;
  const double y2 = (b[2] - l20 * y0 - l21 * y1) / l22;
  const double x2 = y2 / l22;
  const double x1 = (y1 - l21 * x2) / l11;
  const double x0 = (y0 - l10 * x1 - l20 * x2) / l00;
  return {x0, x1, x2};
}

// Point-mass Jacobian rows (x and vertical) and velocity-product bias.
struct PointTerms {
  std::array<double, 3> jx;
  std::array<double, 3> jz;
  double bx;
  double bz;
};

using Mat3 = std::array<std::array<double, 3>, 3>;

// Generalized mass matrix over (z, q1, q2).
Mat3 mass_matrix(const HopperConfig& cfg, const Vec2& q) {
  const Kinematics k = kinematics(q);
  const double l1 = cfg.thigh_length;
  const double h1 = 0.5 * l1;
  const double h2 = 0.5 * cfg.shank_length;
  const std::array<std::array<double, 3>, 4> rows{{{0.0, h1 * k.c1, 0.0},
                                                   {1.0, h1 * k.s1, 0.0},
                                                   {0.0, l1 * k.c1 + h2 * k.c12, h2 * k.c12},
                                                   {1.0, l1 * k.s1 + h2 * k.s12, h2 * k.s12}}};
  const std::array<double, 4> mass{cfg.thigh_mass, cfg.thigh_mass, cfg.shank_mass, cfg.shank_mass};
  Mat3 m{};
  m[0][0] = cfg.body_mass;
  for (int p = 0; p < 4; ++p) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) m[a][b] += mass[p] * rows[p][a] * rows[p][b];
    }
  }
  return m;
}

// Brings joint speeds inside the limit with an internal joint impulse, so the
// slider velocity reacts consistently and vertical momentum is preserved.
void limit_joint_speed(const HopperConfig& cfg, HopperState& s) {
  const double lim = cfg.joint_vel_limit;
  std::array<bool, 2> active{false, false};
  for (int pass = 0; pass < 3; ++pass) {
    bool any = false;
    for (int j = 0; j < 2; ++j) {
      if (std::abs(s.q_dot[j]) > lim) active[j] = any = true;
    }
    if (!any) break;
    const Mat3 m = mass_matrix(cfg, s.q);
    // Columns of the inverse mass matrix for the two joint coordinates.
    const auto c1 = solve3(m, {0.0, 1.0, 0.0});
    const auto c2 = solve3(m, {0.0, 0.0, 1.0});
    Vec2 target{std::clamp(s.q_dot[0], -lim, lim), std::clamp(s.q_dot[1], -lim, lim)};
    Vec2 need{target[0] - s.q_dot[0], target[1] - s.q_dot[1]};
    Vec2 p{0.0, 0.0};
    if (active[0] && active[1]) {
      const double det = c1[1] * c2[2] - c2[1] * c1[2];
      p[0] = (need[0] * c2[2] - c2[1] * need[1]) / det;
      p[1] = (c1[1] * need[1] - need[0] * c1[2]) / det;
    } else if (active[0]) {
      p[0] = need[0] / c1[1];
    } else {
      p[1] = need[1] / c2[2];
    }
    s.z_dot += c1[0] * p[0] + c2[0] * p[1];
    s.q_dot[0] += c1[1] * p[0] + c2[1] * p[1];
    s.q_dot[1] += c1[2] * p[0] + c2[2] * p[1];
  }
  // Roundoff guard so the bound holds exactly.
  for (int j = 0; j < 2; ++j) s.q_dot[j] = std::clamp(s.q_dot[j], -lim, lim);
}

}  // namespace

void HopperConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("hopper.") + name + " must be > 0");
  };
  positive(body_mass, "body_mass");
  positive(thigh_mass, "thigh_mass");
  positive(shank_mass, "shank_mass");
  positive(thigh_length, "thigh_length");
  positive(shank_length, "shank_length");
  positive(gravity, "gravity");
  positive(contact_stiffness, "contact_stiffness");
  positive(contact_damping, "contact_damping");
  positive(friction, "friction");
  positive(slip_damping, "slip_damping");
  positive(kp, "kp");
  positive(kd, "kd");
  positive(torque_limit, "torque_limit");
  positive(joint_vel_limit, "joint_vel_limit");
  positive(dt_physics, "dt_physics");
  if (substeps < 1) throw ConfigError("hopper.substeps must be >= 1");
  if (horizon < 1) throw ConfigError("hopper.horizon must be >= 1");
  if (!(min_height < max_height)) throw ConfigError("hopper.min_height must be < max_height");
  if (reset_noise < 0.0) throw ConfigError("hopper.reset_noise must be >= 0");
}

void RewardConfig::validate() const {
  if (!(c1 >= 0.0)) throw ConfigError("reward.c1 must be >= 0");
  if (!(c2 <= 0.0)) throw ConfigError("reward.c2 must be <= 0");
  if (!(c3 <= 0.0)) throw ConfigError("reward.c3 must be <= 0");
  if (!(c4 <= 0.0)) throw ConfigError("reward.c4 must be <= 0");
  if (!(c5 <= 0.0)) throw ConfigError("reward.c5 must be <= 0");
}

Vec2 foot_position(const HopperConfig& cfg, double z, const Vec2& q) {
  const Kinematics k = kinematics(q);
  return {cfg.thigh_length * k.s1 + cfg.shank_length * k.s12,
          z - cfg.thigh_length * k.c1 - cfg.shank_length * k.c12};
}

Vec2 foot_velocity(const HopperConfig& cfg, const HopperState& s) {
  const Kinematics k = kinematics(s.q);
  const double l1 = cfg.thigh_length;
  const double l2 = cfg.shank_length;
  const double w12 = s.q_dot[0] + s.q_dot[1];
  return {l1 * k.c1 * s.q_dot[0] + l2 * k.c12 * w12,
          s.z_dot + l1 * k.s1 * s.q_dot[0] + l2 * k.s12 * w12};
}

Accelerations accelerations(const HopperConfig& cfg, const HopperState& s, const Vec2& torque) {
  const Kinematics k = kinematics(s.q);
  const double l1 = cfg.thigh_length;
  const double l2 = cfg.shank_length;
  const double h1 = 0.5 * l1;
  const double h2 = 0.5 * l2;
  const double w1 = s.q_dot[0];
  const double w12 = s.q_dot[0] + s.q_dot[1];

  const PointTerms thigh{{0.0, h1 * k.c1, 0.0},
                         {1.0, h1 * k.s1, 0.0},
                         -h1 * k.s1 * w1 * w1,
                         h1 * k.c1 * w1 * w1};
  const PointTerms shank{{0.0, l1 * k.c1 + h2 * k.c12, h2 * k.c12},
                         {1.0, l1 * k.s1 + h2 * k.s12, h2 * k.s12},
                         -l1 * k.s1 * w1 * w1 - h2 * k.s12 * w12 * w12,
                         l1 * k.c1 * w1 * w1 + h2 * k.c12 * w12 * w12};
  const std::array<double, 3> foot_jx{0.0, l1 * k.c1 + l2 * k.c12, l2 * k.c12};
  const std::array<double, 3> foot_jz{1.0, l1 * k.s1 + l2 * k.s12, l2 * k.s12};

  const Mat3 m = mass_matrix(cfg, s.q);
  std::array<double, 3> rhs{0.0, torque[0], torque[1]};

  rhs[0] -= cfg.body_mass * cfg.gravity;
  for (const auto& [pt, mass] : {std::pair{thigh, cfg.thigh_mass}, std::pair{shank, cfg.shank_mass}}) {
    for (int a = 0; a < 3; ++a) {
      rhs[a] -= mass * (pt.jx[a] * pt.bx + pt.jz[a] * pt.bz);
      rhs[a] -= mass * cfg.gravity * pt.jz[a];
    }
  }

  Accelerations out;
  const double height = s.z - l1 * k.c1 - l2 * k.c12;
  if (height < 0.0) {
    const double vx = foot_jx[1] * s.q_dot[0] + foot_jx[2] * s.q_dot[1];
    const double vz = s.z_dot + foot_jz[1] * s.q_dot[0] + foot_jz[2] * s.q_dot[1];
    const double fn = std::max(0.0, -cfg.contact_stiffness * height - cfg.contact_damping * vz);
    const double limit = cfg.friction * fn;
    const double ft = -std::clamp(cfg.slip_damping * vx, -limit, limit);
    for (int a = 0; a < 3; ++a) rhs[a] += foot_jx[a] * ft + foot_jz[a] * fn;
    out.normal_force = fn;
    out.friction_force = ft;
  }

  const auto acc = solve3(m, rhs);
  out.z_ddot = acc[0];
  out.q_ddot = {acc[1], acc[2]};
  return out;
}

double mechanical_energy(const HopperConfig& cfg, const HopperState& s) {
  const Kinematics k = kinematics(s.q);
  const double l1 = cfg.thigh_length;
  const double h1 = 0.5 * l1;
  const double h2 = 0.5 * cfg.shank_length;
  const double w1 = s.q_dot[0];
  const double w12 = s.q_dot[0] + s.q_dot[1];

  const double thigh_vx = h1 * k.c1 * w1;
  const double thigh_vz = s.z_dot + h1 * k.s1 * w1;
  const double shank_vx = l1 * k.c1 * w1 + h2 * k.c12 * w12;
  const double shank_vz = s.z_dot + l1 * k.s1 * w1 + h2 * k.s12 * w12;
  const double kinetic = 0.5 * cfg.body_mass * s.z_dot * s.z_dot +
                         0.5 * cfg.thigh_mass * (thigh_vx * thigh_vx + thigh_vz * thigh_vz) +
                         0.5 * cfg.shank_mass * (shank_vx * shank_vx + shank_vz * shank_vz);
  const double potential =
      cfg.gravity * (cfg.body_mass * s.z + cfg.thigh_mass * (s.z - h1 * k.c1) +
                     cfg.shank_mass * (s.z - l1 * k.c1 - h2 * k.c12));
  return kinetic + potential;
}

Vec2 pd_torque(const HopperConfig& cfg, const HopperState& s, const Vec2& desired) {
  Vec2 tau;
  for (int j = 0; j < 2; ++j) {
    const double raw = cfg.kp * (desired[j] - s.q[j]) - cfg.kd * s.q_dot[j];
    tau[j] = std::clamp(raw, -cfg.torque_limit, cfg.torque_limit);
  }
  return tau;
}

HopperState integrate_physics(const HopperConfig& cfg, const HopperState& s, const Vec2& torque) {
  using V6 = std::array<double, 6>;
  auto pack = [](const HopperState& h) -> V6 {
    return {h.z, h.q[0], h.q[1], h.z_dot, h.q_dot[0], h.q_dot[1]};
  };
  auto at = [&](const V6& x) {
    HopperState h = s;
    h.z = x[0];
    h.q = {x[1], x[2]};
    h.z_dot = x[3];
    h.q_dot = {x[4], x[5]};
    return h;
  };
  auto deriv = [&](const V6& x) -> V6 {
    const Accelerations a = accelerations(cfg, at(x), torque);
    return {x[3], x[4], x[5], a.z_ddot, a.q_ddot[0], a.q_ddot[1]};
  };

  const double dt = cfg.dt_physics;
  const V6 x0 = pack(s);
  auto axpy = [](const V6& x, const V6& d, double h) {
    V6 out;
    for (int i = 0; i < 6; ++i) out[i] = x[i] + h * d[i];
    return out;
  };
  const V6 k1 = deriv(x0);
  const V6 k2 = deriv(axpy(x0, k1, 0.5 * dt));
  const V6 k3 = deriv(axpy(x0, k2, 0.5 * dt));
  const V6 k4 = deriv(axpy(x0, k3, dt));
  V6 x1;
  for (int i = 0; i < 6; ++i) x1[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

  HopperState out = at(x1);
  limit_joint_speed(cfg, out);
  out.foot_pos = foot_position(cfg, out.z, out.q);
  out.foot_contact = out.foot_pos[1] <= 0.0;
  return out;
}

Observation make_observation(const HopperState& s) {
  return {s.q[0], s.q[1], s.q_dot[0], s.q_dot[1], s.desired[0], s.desired[1], s.z, s.z_dot};
}

RewardTerms compute_reward(const HopperConfig& hopper, [[maybe_unused]] const HopperState& before,
                           const HopperState& after, const Vec2& desired, const Vec2& torques,
                           const RewardConfig& cfg) {
  RewardTerms r{};
  const double up = cfg.c1 * std::max(after.z_dot, 0.0);
  r[0] = up * up;
  for (int j = 0; j < 2; ++j) {
    const double err = desired[j] - after.q[j];
    r[1] += cfg.c2 * err * err;
    r[2] += cfg.c3 * after.q_dot[j] * after.q_dot[j];
    r[3] += cfg.c4 * torques[j] * torques[j];
  }
  const double slip = after.foot_contact ? std::abs(foot_velocity(hopper, after)[0]) : 0.0;
  r[4] = cfg.c5 * slip;
  return r;
}

HopperEnv::HopperEnv(HopperConfig cfg, RewardConfig reward)
    : cfg_(std::move(cfg)), reward_(std::move(reward)) {
  cfg_.validate();
  reward_.validate();
}

HopperEnv::Reset HopperEnv::reset(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-cfg_.reset_noise, cfg_.reset_noise);
  HopperState s;
  s.q = {cfg_.crouch[0] + noise(rng), cfg_.crouch[1] + noise(rng)};
  s.q_dot = {0.0, 0.0};
  // Rest on the ground with the static spring compression carrying the weight.
  const double leg = -foot_position(cfg_, 0.0, s.q)[1];
  const double sink = cfg_.total_mass() * cfg_.gravity / cfg_.contact_stiffness;
  s.z = leg - sink;
  s.z_dot = 0.0;
  s.foot_pos = foot_position(cfg_, s.z, s.q);
  s.foot_contact = s.foot_pos[1] <= 0.0;
  s.desired = s.q;
  s.step = 0;
  return {s, make_observation(s)};
}

StepResult HopperEnv::step(const HopperState& state, const Vec2& desired) const {
  if (!std::isfinite(desired[0]) || !std::isfinite(desired[1])) {
    throw PhysicsFault("non-finite desired joint position");
  }
  StepResult res;
  HopperState s = state;
  Vec2 torque_sum{0.0, 0.0};
  double slip_sum = 0.0;
  double normal_sum = 0.0;
  for (int k = 0; k < cfg_.substeps; ++k) {
    const Vec2 tau = pd_torque(cfg_, s, desired);
    torque_sum[0] += tau[0];
    torque_sum[1] += tau[1];
    s = integrate_physics(cfg_, s, tau);
    if (s.foot_contact) {
      slip_sum += std::abs(foot_velocity(cfg_, s)[0]);
      normal_sum += accelerations(cfg_, s, tau).normal_force;
    }
    if (!std::isfinite(s.z) || !std::isfinite(s.z_dot) || !std::isfinite(s.q[0]) ||
        !std::isfinite(s.q[1]) || !std::isfinite(s.q_dot[0]) || !std::isfinite(s.q_dot[1])) {
      throw PhysicsFault("non-finite hopper state at control step " + std::to_string(state.step));
    }
  }
  const double n = static_cast<double>(cfg_.substeps);
  res.info.torque = {torque_sum[0] / n, torque_sum[1] / n};
  res.info.foot_slip = slip_sum / n;
  res.info.normal_force = normal_sum / n;

  s.desired = desired;
  s.step = state.step + 1;
  res.state = s;
  res.observation = make_observation(s);
  res.terms = compute_reward(cfg_, state, s, desired, res.info.torque, reward_);
  res.reward = res.terms[0] + res.terms[1] + res.terms[2] + res.terms[3] + res.terms[4];
  res.done = s.z < cfg_.min_height || s.z > cfg_.max_height || s.step >= cfg_.horizon;
  return res;
}

TrajectoryWriter::TrajectoryWriter(std::ostream& out) : out_(out) {
  out_ << "t,z,z_dot,q1,q2,qd1,qd2,pdes1,pdes2,tau1,tau2,r1,r2,r3,r4,r5,contact\n";
  out_ << std::setprecision(17);
}

void TrajectoryWriter::initial(const HopperState& s) {
  out_ << 0.0 << ',' << s.z << ',' << s.z_dot << ',' << s.q[0] << ',' << s.q[1] << ','
       << s.q_dot[0] << ',' << s.q_dot[1] << ',' << s.desired[0] << ',' << s.desired[1]
       << ",0,0,0,0,0,0,0," << (s.foot_contact ? 1 : 0) << '\n';
}

void TrajectoryWriter::row(const StepResult& r, double t) {
  const HopperState& s = r.state;
  out_ << t << ',' << s.z << ',' << s.z_dot << ',' << s.q[0] << ',' << s.q[1] << ','
       << s.q_dot[0] << ',' << s.q_dot[1] << ',' << s.desired[0] << ',' << s.desired[1] << ','
       << r.info.torque[0] << ',' << r.info.torque[1];
  for (double term : r.terms) out_ << ',' << term;
  out_ << ',' << (s.foot_contact ? 1 : 0) << '\n';
}

}  // namespace cpg_actor
