#pragma once

// Mountain Car Continuous (four reward tasks) and a simplified two-link
// planar Reacher (four behavioral tasks), plus the episode loop.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polycomp/errors.hpp"
#include "polycomp/seeding.hpp"

namespace polycomp {

enum class EnvId { MountainCar, Reacher };

enum class Task {
  McStandard,
  McLeft,
  McSpeed,
  McHeight,
  RcSpeed,
  RcClockwise,
  RcCounterClockwise,
  RcRadial,
};

EnvId env_of(Task task);
std::string_view env_name(EnvId env);
EnvId parse_env(std::string_view name);
std::string_view task_name(Task task);
// Accepts "c_clockwise" and "c-clockwise" for the counter-clockwise task.
Task parse_task(EnvId env, std::string_view name);
std::vector<Task> all_tasks(EnvId env);

// ---------------------------------------------------------------------------
// Mountain Car

struct MountainCarState {
  double position = 0.0;
  double velocity = 0.0;
};

struct MountainCarConfig {
  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr double kPower = 0.0015;
  static constexpr double kGravity = 0.0025;

  double right_goal = 0.45;
  double left_goal = -1.1;
  int horizon = 999;
};

MountainCarState mc_reset(Rng& rng);
MountainCarState mc_step(const MountainCarState& s, double action);
double mc_height(double position);
// Per-step reward for `task` after landing in `next` with `action`.
double mc_reward(Task task, const MountainCarState& next, double action, bool reached_right_goal,
                 bool reached_left_goal);

// ---------------------------------------------------------------------------
// Reacher

struct ReacherState {
  double q1 = 0.0;
  double q2 = 0.0;
  double w1 = 0.0;
  double w2 = 0.0;
};

struct ReacherPhysicsConfig {
  double link1 = 0.1;
  double link2 = 0.11;
  std::array<double, 2> inertia{0.01, 0.01};
  std::array<double, 2> damping{0.04, 0.04};
  double torque_gain = 1.0;
  double dt = 0.02;
  int horizon = 50;

  double speed_threshold = 6.0;
  double clockwise_threshold = -11.0;
  double counter_clockwise_threshold = 1.0;
  double radial_threshold = 3.0;
  // When set, clockwise fires on tangential < clockwise_threshold instead of >.
  bool clockwise_flip = false;

  void validate() const;
};

double wrap_angle(double a);
ReacherState reacher_reset(Rng& rng);
ReacherState reacher_step(const ReacherState& s, std::array<double, 2> torque,
                          const ReacherPhysicsConfig& cfg);
std::array<double, 6> reacher_observe(const ReacherState& s);

struct TipVelocity {
  double vx = 0.0;
  double vy = 0.0;
  double speed = 0.0;
  // d|r|/dt, r = tip position relative to the base.
  double radial = 0.0;
  // (r x v)_z / |r|; positive is counter-clockwise.
  double tangential = 0.0;
};

TipVelocity reacher_tip_velocity(const ReacherState& s, const ReacherPhysicsConfig& cfg);
double reacher_reward(Task task, const ReacherState& s, const ReacherPhysicsConfig& cfg);

// ---------------------------------------------------------------------------
// Environment descriptor + rollout

struct EnvConfig {
  EnvId id = EnvId::MountainCar;
  MountainCarConfig mc;
  ReacherPhysicsConfig reacher;

  std::size_t obs_dim() const { return id == EnvId::MountainCar ? 2 : 6; }
  std::size_t act_dim() const { return id == EnvId::MountainCar ? 1 : 2; }
  int horizon() const { return id == EnvId::MountainCar ? mc.horizon : reacher.horizon; }
  // Declared observation bounds used for policy input normalization.
  std::vector<double> obs_lower() const;
  std::vector<double> obs_upper() const;
};

struct EpisodeResult {
  double total_return = 0.0;
  int steps = 0;
  bool terminated = false;
};

// Runs one episode. `policy(obs, action)` writes act_dim() entries to action;
// actions are clipped to [-1, 1] before the dynamics. horizon <= 0 uses the
// environment default.
template <class Policy>
EpisodeResult rollout(const EnvConfig& env, Policy&& policy, Task task, Rng& rng,
                      int horizon = 0) {
  if (env_of(task) != env.id)
    throw UsageError("rollout: task " + std::string(task_name(task)) + " does not belong to env " +
                     std::string(env_name(env.id)));
  if (horizon <= 0) horizon = env.horizon();
  EpisodeResult out;
  if (env.id == EnvId::MountainCar) {
    MountainCarState s = mc_reset(rng);
    std::array<double, 2> obs{};
    std::array<double, 1> act{};
    for (int t = 0; t < horizon; ++t) {
      obs = {s.position, s.velocity};
      policy(std::span<const double>(obs), std::span<double>(act));
      const double a = act[0] > 1.0 ? 1.0 : (act[0] < -1.0 ? -1.0 : act[0]);
      s = mc_step(s, a);
      const bool right = s.position >= env.mc.right_goal;
      const bool left = s.position <= env.mc.left_goal;
      out.total_return += mc_reward(task, s, a, right, left);
      out.steps = t + 1;
      const bool done = task == Task::McLeft ? left : right;
      if (done) {
        out.terminated = true;
        break;
      }
    }
  } else {
    ReacherState s = reacher_reset(rng);
    std::array<double, 2> act{};
    for (int t = 0; t < horizon; ++t) {
      const auto obs = reacher_observe(s);
      policy(std::span<const double>(obs), std::span<double>(act));
      s = reacher_step(s, act, env.reacher);
      out.total_return += reacher_reward(task, s, env.reacher);
      out.steps = t + 1;
    }
  }
  return out;
}

}  // namespace polycomp
