#include "polycomp/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace polycomp {

EnvId env_of(Task task) {
  switch (task) {
    case Task::McStandard:
    case Task::McLeft:
    case Task::McSpeed:
    case Task::McHeight:
      return EnvId::MountainCar;
    default:
      return EnvId::Reacher;
  }
}

std::string_view env_name(EnvId env) { return env == EnvId::MountainCar ? "mc" : "rc"; }

EnvId parse_env(std::string_view name) {
  if (name == "mc") return EnvId::MountainCar;
  if (name == "rc") return EnvId::Reacher;
  throw ConfigError("unknown environment '" + std::string(name) + "' (expected mc or rc)");
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::McStandard: return "standard";
    case Task::McLeft: return "left";
    case Task::McSpeed: return "speed";
    case Task::McHeight: return "height";
    case Task::RcSpeed: return "speed";
    case Task::RcClockwise: return "clockwise";
    case Task::RcCounterClockwise: return "c_clockwise";
    case Task::RcRadial: return "radial";
  }
  return "?";
}

Task parse_task(EnvId env, std::string_view name) {
  if (env == EnvId::MountainCar) {
    if (name == "standard") return Task::McStandard;
    if (name == "left") return Task::McLeft;
    if (name == "speed") return Task::McSpeed;
    if (name == "height") return Task::McHeight;
  } else {
    if (name == "speed") return Task::RcSpeed;
    if (name == "clockwise") return Task::RcClockwise;
    if (name == "c_clockwise" || name == "c-clockwise") return Task::RcCounterClockwise;
    if (name == "radial") return Task::RcRadial;
  }
  throw ConfigError("unknown task '" + std::string(name) + "' for env " +
                    std::string(env_name(env)));
}

std::vector<Task> all_tasks(EnvId env) {
  if (env == EnvId::MountainCar)
    return {Task::McStandard, Task::McLeft, Task::McSpeed, Task::McHeight};
  return {Task::RcSpeed, Task::RcClockwise, Task::RcCounterClockwise, Task::RcRadial};
}

// ---------------------------------------------------------------------------

MountainCarState mc_reset(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.6, -0.4);
  return {u(rng), 0.0};
}

MountainCarState mc_step(const MountainCarState& s, double action) {
  using C = MountainCarConfig;
  const double a = std::clamp(action, -1.0, 1.0);
  double v = s.velocity + a * C::kPower - C::kGravity * std::cos(3.0 * s.position);
  v = std::clamp(v, -C::kMaxSpeed, C::kMaxSpeed);
  double p = std::clamp(s.position + v, C::kMinPosition, C::kMaxPosition);
  if (p == C::kMinPosition && v < 0.0) v = 0.0;
  return {p, v};
}

double mc_height(double position) { return std::sin(3.0 * position) * 0.45 + 0.55; }

double mc_reward(Task task, const MountainCarState& next, double action, bool reached_right_goal,
                 bool reached_left_goal) {
  switch (task) {
    case Task::McStandard:
      return -0.1 * action * action + (reached_right_goal ? 100.0 : 0.0);
    case Task::McLeft:
      return -0.1 * action * action + (reached_left_goal ? 100.0 : 0.0);
    case Task::McHeight: {
      const double h = mc_height(next.position);
      return h >= 0.2 ? h * h : 0.0;
    }
    case Task::McSpeed:
      return next.velocity * next.velocity;
    default:
      throw UsageError("mc_reward: task " + std::string(task_name(task)) +
                       " is not a Mountain Car task");
  }
}

// ---------------------------------------------------------------------------

void ReacherPhysicsConfig::validate() const {
  const bool ok = link1 > 0 && link2 > 0 && inertia[0] > 0 && inertia[1] > 0 && damping[0] > 0 &&
                  damping[1] > 0 && torque_gain > 0 && dt > 0 && horizon > 0;
  if (!ok) throw ConfigError("reacher physics constants must all be positive");
}

double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

ReacherState reacher_reset(Rng& rng) {
  std::uniform_real_distribution<double> angle(-0.1, 0.1);
  std::uniform_real_distribution<double> vel(-0.005, 0.005);
  ReacherState s;
  s.q1 = angle(rng);
  s.q2 = angle(rng);
  s.w1 = vel(rng);
  s.w2 = vel(rng);
  return s;
}

ReacherState reacher_step(const ReacherState& s, std::array<double, 2> torque,
                          const ReacherPhysicsConfig& cfg) {
  const double t1 = std::clamp(torque[0], -1.0, 1.0);
  const double t2 = std::clamp(torque[1], -1.0, 1.0);
  ReacherState n;
  n.w1 = s.w1 + cfg.dt * (cfg.torque_gain * t1 - cfg.damping[0] * s.w1) / cfg.inertia[0];
  n.w2 = s.w2 + cfg.dt * (cfg.torque_gain * t2 - cfg.damping[1] * s.w2) / cfg.inertia[1];
  n.q1 = wrap_angle(s.q1 + cfg.dt * n.w1);
  n.q2 = wrap_angle(s.q2 + cfg.dt * n.w2);
  return n;
}

std::array<double, 6> reacher_observe(const ReacherState& s) {
  return {std::cos(s.q1), std::cos(s.q2), std::sin(s.q1), std::sin(s.q2), s.w1, s.w2};
}

TipVelocity reacher_tip_velocity(const ReacherState& s, const ReacherPhysicsConfig& cfg) {
  const double c1 = std::cos(s.q1), s1 = std::sin(s.q1);
  const double c12 = std::cos(s.q1 + s.q2), s12 = std::sin(s.q1 + s.q2);
  const double rx = cfg.link1 * c1 + cfg.link2 * c12;
  const double ry = cfg.link1 * s1 + cfg.link2 * s12;
  const double w12 = s.w1 + s.w2;
  TipVelocity v;
  v.vx = -cfg.link1 * s.w1 * s1 - cfg.link2 * w12 * s12;
  v.vy = cfg.link1 * s.w1 * c1 + cfg.link2 * w12 * c12;
  v.speed = std::hypot(v.vx, v.vy);
  const double r = std::hypot(rx, ry);
  if (r > 1e-12) {
    v.radial = (rx * v.vx + ry * v.vy) / r;
    v.tangential = (rx * v.vy - ry * v.vx) / r;
  }
  return v;
}

double reacher_reward(Task task, const ReacherState& s, const ReacherPhysicsConfig& cfg) {
  if (env_of(task) != EnvId::Reacher)
    throw UsageError("reacher_reward: task " + std::string(task_name(task)) +
                     " is not a Reacher task");
  const TipVelocity v = reacher_tip_velocity(s, cfg);
  bool hit = false;
  switch (task) {
    case Task::RcSpeed:
      hit = v.speed > cfg.speed_threshold;
      break;
    case Task::RcClockwise:
      hit = cfg.clockwise_flip ? v.tangential < cfg.clockwise_threshold
                               : v.tangential > cfg.clockwise_threshold;
      break;
    case Task::RcCounterClockwise:
      hit = v.tangential > cfg.counter_clockwise_threshold;
      break;
    case Task::RcRadial:
      hit = v.radial > cfg.radial_threshold;
      break;
    default:
      break;
  }
  return hit ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------

std::vector<double> EnvConfig::obs_lower() const {
  if (id == EnvId::MountainCar)
    return {MountainCarConfig::kMinPosition, -MountainCarConfig::kMaxSpeed};
  return {-1, -1, -1, -1, -5, -5};
}

std::vector<double> EnvConfig::obs_upper() const {
  if (id == EnvId::MountainCar)
    return {MountainCarConfig::kMaxPosition, MountainCarConfig::kMaxSpeed};
  return {1, 1, 1, 1, 5, 5};
}

}  // namespace polycomp
