#include <doctest.h>

#include <cmath>
#include <numbers>

#include "polycomp/envs.hpp"

using namespace polycomp;

namespace {

auto zero_policy = [](std::span<const double>, std::span<double> a) {
  for (auto& x : a) x = 0.0;
};

// Pushes in the direction of motion; pumps energy into the car.
auto pump_policy = [](std::span<const double> s, std::span<double> a) {
  a[0] = s[1] >= 0.0 ? 1.0 : -1.0;
};

std::array<double, 2> tip_position(const ReacherState& s, const ReacherPhysicsConfig& c) {
  return {c.link1 * std::cos(s.q1) + c.link2 * std::cos(s.q1 + s.q2),
          c.link1 * std::sin(s.q1) + c.link2 * std::sin(s.q1 + s.q2)};
}

}  // namespace

TEST_SUITE("envs") {
  TEST_CASE("mc_reset range and determinism") {
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
      auto s = mc_reset(rng);
      CHECK(s.position >= -0.6);
      CHECK(s.position <= -0.4);
      CHECK(s.velocity == 0.0);
    }
    Rng a(5), b(5);
    CHECK(mc_reset(a).position == mc_reset(b).position);
  }

  TEST_CASE("mc_reset mean is -0.5 within 3 standard errors") {
    Rng rng(2024);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += mc_reset(rng).position;
    const double se = (0.2 / std::sqrt(12.0)) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(sum / n + 0.5) < 3.0 * se);
  }

  TEST_CASE("mc_step matches the dynamics equation") {
    auto s = mc_step({-0.5, 0.0}, 1.0);
    CHECK(s.velocity == doctest::Approx(0.0015 - 0.0025 * std::cos(-1.5)).epsilon(1e-15));
    CHECK(s.velocity == doctest::Approx(0.00132316).epsilon(1e-6));
    CHECK(s.position == doctest::Approx(-0.49867684).epsilon(1e-8));

    const double bottom = -std::numbers::pi / 6.0;
    auto e = mc_step({bottom, 0.0}, 0.0);
    CHECK(std::abs(e.velocity) < 1e-18);
    CHECK(std::abs(e.position - bottom) < 1e-18);

    // Action is clipped internally.
    auto c1 = mc_step({-0.5, 0.0}, 5.0), c2 = mc_step({-0.5, 0.0}, 1.0);
    CHECK(c1.velocity == c2.velocity);

    // Left wall is inelastic.
    auto w = mc_step({-1.19, -0.05}, -1.0);
    CHECK(w.position == MountainCarConfig::kMinPosition);
    CHECK(w.velocity == 0.0);
  }

  TEST_CASE("mc state bounds hold under random actions") {
    Rng rng(77);
    std::uniform_real_distribution<double> act(-1.5, 1.5);
    for (int ep = 0; ep < 100; ++ep) {
      auto s = mc_reset(rng);
      for (int t = 0; t < 999; ++t) {
        s = mc_step(s, act(rng));
        REQUIRE(std::abs(s.velocity) <= 0.07);
        REQUIRE(s.position >= -1.2);
        REQUIRE(s.position <= 0.6);
      }
    }
  }

  TEST_CASE("mc rewards") {
    CHECK(mc_reward(Task::McStandard, {-0.5, 0.0}, 1.0, false, false) ==
          doctest::Approx(-0.1));
    CHECK(mc_reward(Task::McStandard, {0.5, 0.01}, 0.0, true, false) == 100.0);
    CHECK(mc_reward(Task::McLeft, {-1.15, 0.0}, 0.0, false, true) == 100.0);
    CHECK(mc_reward(Task::McLeft, {0.5, 0.0}, 0.0, true, false) == 0.0);
    CHECK(mc_height(0.0) == doctest::Approx(0.55));
    CHECK(mc_reward(Task::McHeight, {0.0, 0.0}, 0.0, false, false) == doctest::Approx(0.3025));
    // h < 0.2 -> no height reward (valley bottom: h = 0.1).
    CHECK(mc_reward(Task::McHeight, {-std::numbers::pi / 6, 0.0}, 0.0, false, false) == 0.0);
    CHECK(mc_reward(Task::McSpeed, {-0.5, 0.0}, 1.0, false, false) == 0.0);
    CHECK(mc_reward(Task::McSpeed, {-0.5, 0.03}, 1.0, false, false) == doctest::Approx(9e-4));
    CHECK_THROWS_AS(mc_reward(Task::RcSpeed, {}, 0.0, false, false), UsageError);
  }

  TEST_CASE("mc rewards are pure") {
    MountainCarState s{-0.3, 0.02};
    for (Task t : all_tasks(EnvId::MountainCar))
      CHECK(mc_reward(t, s, 0.4, false, false) == mc_reward(t, s, 0.4, false, false));
  }

  TEST_CASE("reacher equilibrium, steady state and damping contraction") {
    ReacherPhysicsConfig cfg;
    ReacherState z;
    auto n = reacher_step(z, {0.0, 0.0}, cfg);
    CHECK(n.q1 == 0.0);
    CHECK(n.q2 == 0.0);
    CHECK(n.w1 == 0.0);
    CHECK(n.w2 == 0.0);

    ReacherState s;
    for (int i = 0; i < 2000; ++i) s = reacher_step(s, {0.5, -1.0}, cfg);
    CHECK(s.w1 == doctest::Approx(cfg.torque_gain * 0.5 / cfg.damping[0]).epsilon(1e-9));
    CHECK(s.w2 == doctest::Approx(-cfg.torque_gain / cfg.damping[1]).epsilon(1e-9));
    // Bang-bang speed stays within the documented envelope.
    CHECK(std::abs(s.w2) <= 30.0);

    ReacherState d{0.3, -0.2, 4.0, -3.0};
    for (int i = 0; i < 50; ++i) {
      auto nd = reacher_step(d, {0.0, 0.0}, cfg);
      CHECK(std::abs(nd.w1) < std::abs(d.w1));
      CHECK(std::abs(nd.w2) < std::abs(d.w2));
      d = nd;
    }
  }

  TEST_CASE("angle wrapping lands in (-pi, pi]") {
    const double pi = std::numbers::pi;
    CHECK(wrap_angle(pi) == doctest::Approx(pi));
    CHECK(wrap_angle(-pi) == doctest::Approx(pi));
    CHECK(wrap_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
    for (double a = -20.0; a < 20.0; a += 0.37) {
      const double w = wrap_angle(a);
      CHECK(w > -pi);
      CHECK(w <= pi);
      CHECK(std::cos(w) == doctest::Approx(std::cos(a)));
    }
  }

  TEST_CASE("reacher observation layout and identities") {
    auto o = reacher_observe({});
    CHECK(o == std::array<double, 6>{1, 1, 0, 0, 0, 0});
    auto h = reacher_observe({std::numbers::pi / 2, 0.0, 0.0, 0.0});
    CHECK(std::abs(h[0]) < 1e-15);
    CHECK(h[2] == 1.0);

    Rng rng(3);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 200; ++i) {
      ReacherState s{u(rng), u(rng), u(rng), u(rng)};
      auto ob = reacher_observe(s);
      CHECK(ob[0] * ob[0] + ob[2] * ob[2] == doctest::Approx(1.0));
      CHECK(ob[1] * ob[1] + ob[3] * ob[3] == doctest::Approx(1.0));
      for (int k = 0; k < 4; ++k) CHECK(std::abs(ob[k]) <= 1.0);
    }
  }

  TEST_CASE("reacher tip velocity matches a numerical kinematic oracle") {
    ReacherPhysicsConfig cfg;
    Rng rng(12);
    std::uniform_real_distribution<double> ang(-3.0, 3.0), vel(-20.0, 20.0);
    for (int i = 0; i < 50; ++i) {
      ReacherState s{ang(rng), ang(rng), vel(rng), vel(rng)};
      // Differentiate tip position along the instantaneous joint velocities.
      const double h = 1e-7;
      ReacherState up{s.q1 + h * s.w1, s.q2 + h * s.w2, 0, 0};
      ReacherState dn{s.q1 - h * s.w1, s.q2 - h * s.w2, 0, 0};
      auto pu = tip_position(up, cfg), pd = tip_position(dn, cfg), p = tip_position(s, cfg);
      const double vx = (pu[0] - pd[0]) / (2 * h), vy = (pu[1] - pd[1]) / (2 * h);
      const double r = std::hypot(p[0], p[1]);
      const double ru = std::hypot(pu[0], pu[1]), rd = std::hypot(pd[0], pd[1]);
      auto v = reacher_tip_velocity(s, cfg);
      CHECK(v.vx == doctest::Approx(vx).epsilon(1e-6));
      CHECK(v.vy == doctest::Approx(vy).epsilon(1e-6));
      CHECK(v.radial == doctest::Approx((ru - rd) / (2 * h)).epsilon(1e-5));
      CHECK(v.tangential == doctest::Approx((p[0] * vy - p[1] * vx) / r).epsilon(1e-6));
    }
  }

  TEST_CASE("reacher rewards: extended arm spinning about the base") {
    ReacherPhysicsConfig cfg;
    CHECK(reacher_reward(Task::RcSpeed, {}, cfg) == 0.0);
    CHECK(reacher_reward(Task::RcCounterClockwise, {}, cfg) == 0.0);
    CHECK(reacher_reward(Task::RcRadial, {}, cfg) == 0.0);

    ReacherState spin{0.4, 0.0, 20.0, 0.0};
    auto v = reacher_tip_velocity(spin, cfg);
    CHECK(std::abs(v.radial) < 1e-12);
    CHECK(v.tangential == doctest::Approx(20.0 * (cfg.link1 + cfg.link2)));
    CHECK(reacher_reward(Task::RcCounterClockwise, spin, cfg) == 1.0);
    CHECK(reacher_reward(Task::RcRadial, spin, cfg) == 0.0);

    ReacherState fast{0.4, 0.0, 30.0, 0.0};
    CHECK(reacher_reward(Task::RcSpeed, fast, cfg) == 1.0);

    // As printed, the clockwise threshold is -11 with a '>' comparison.
    CHECK(reacher_reward(Task::RcClockwise, spin, cfg) == 1.0);
    auto flipped = cfg;
    flipped.clockwise_flip = true;
    flipped.clockwise_threshold = -1.0;
    ReacherState cw{0.4, 0.0, -20.0, 0.0};
    CHECK(reacher_reward(Task::RcClockwise, cw, flipped) == 1.0);
    CHECK(reacher_reward(Task::RcClockwise, spin, flipped) == 0.0);

    CHECK_THROWS_AS(reacher_reward(Task::McStandard, spin, cfg), UsageError);
  }

  TEST_CASE("reacher reward is an indicator") {
    ReacherPhysicsConfig cfg;
    Rng rng(8);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int i = 0; i < 500; ++i) {
      ReacherState s{u(rng), u(rng), u(rng), u(rng)};
      for (Task t : all_tasks(EnvId::Reacher)) {
        const double r = reacher_reward(t, s, cfg);
        CHECK((r == 0.0 || r == 1.0));
      }
    }
  }

  TEST_CASE("rollout: zero action on mc speed gives near-zero return") {
    EnvConfig env;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      auto r = rollout(env, zero_policy, Task::McSpeed, rng);
      CHECK(r.total_return >= 0.0);
      CHECK(r.total_return < 0.05);
      CHECK(r.steps == 999);
      CHECK_FALSE(r.terminated);
    }
  }

  TEST_CASE("rollout: reacher episodes run exactly 50 steps") {
    EnvConfig env;
    env.id = EnvId::Reacher;
    auto bang = [](std::span<const double>, std::span<double> a) {
      a[0] = 1.0;
      a[1] = 1.0;
    };
    for (Task t : all_tasks(EnvId::Reacher)) {
      Rng rng(1);
      auto r = rollout(env, bang, t, rng);
      CHECK(r.steps == 50);
      CHECK_FALSE(r.terminated);
      CHECK(r.total_return >= 0.0);
      CHECK(r.total_return <= 50.0);
    }
    Rng rng(1);
    auto sp = rollout(env, bang, Task::RcSpeed, rng);
    CHECK(sp.total_return > 0.0);
  }

  TEST_CASE("rollout: reaching the right goal pays +100 and terminates") {
    EnvConfig env;
    Rng rng(3);
    auto r = rollout(env, pump_policy, Task::McStandard, rng);
    CHECK(r.terminated);
    CHECK(r.steps < 999);
    CHECK(r.total_return == doctest::Approx(100.0 - 0.1 * r.steps));
  }

  TEST_CASE("rollout: left goal is reachable by an oscillating policy") {
    EnvConfig env;
    bool found = false;
    // Search a family of pump policies with a switching offset.
    for (double offset : {0.0, 0.005, -0.005, 0.01}) {
      auto pol = [offset](std::span<const double> s, std::span<double> a) {
        a[0] = s[1] >= offset ? 1.0 : -1.0;
      };
      Rng rng(4);
      auto r = rollout(env, pol, Task::McLeft, rng);
      if (r.terminated && r.total_return > 0.0) found = true;
    }
    CHECK(found);
  }

  TEST_CASE("rollout is deterministic given the seed and rejects foreign tasks") {
    EnvConfig env;
    Rng a(99), b(99);
    auto ra = rollout(env, zero_policy, Task::McHeight, a);
    auto rb = rollout(env, zero_policy, Task::McHeight, b);
    CHECK(ra.total_return == rb.total_return);
    CHECK(ra.steps == rb.steps);
    Rng c(0);
    CHECK_THROWS_AS(rollout(env, zero_policy, Task::RcSpeed, c), UsageError);
  }

  TEST_CASE("env and task names round-trip") {
    for (EnvId e : {EnvId::MountainCar, EnvId::Reacher}) {
      CHECK(parse_env(env_name(e)) == e);
      for (Task t : all_tasks(e)) CHECK(parse_task(e, task_name(t)) == t);
    }
    CHECK(parse_task(EnvId::Reacher, "c-clockwise") == Task::RcCounterClockwise);
    CHECK_THROWS_AS(parse_env("cartpole"), ConfigError);
    CHECK_THROWS_AS(parse_task(EnvId::MountainCar, "radial"), ConfigError);
  }
}
