#include <doctest.h>

#include <cmath>
#include <random>

#include "polycomp/errors.hpp"
#include "polycomp/latent_pgpe.hpp"

using namespace polycomp;

namespace {

EnvConfig mc_env() { return EnvConfig{EnvId::MountainCar, {}, {}}; }

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST_SUITE("latent_pgpe") {
  TEST_CASE("ask produces mirrored pairs around the center") {
    HyperPolicy h{vec({0.3, -1.7, 12.0}), vec({std::log(0.5), 0.0, std::log(2.0)})};
    Rng rng(1);
    const auto pairs = ask(h, rng, 50);
    REQUIRE(pairs.size() == 50);
    for (const auto& p : pairs) {
      const Vector mid = 0.5 * (p.plus + p.minus);
      CHECK((mid - h.mu).cwiseAbs().maxCoeff() <= 4e-15 * 12.0);
      CHECK(p.plus == h.mu + h.sigma().cwiseProduct(p.eps));
      CHECK(p.minus == h.mu - h.sigma().cwiseProduct(p.eps));
    }
    HyperPolicy zero{vec({1.0, 2.0}), Vector::Constant(2, -std::numeric_limits<double>::infinity())};
    for (const auto& p : ask(zero, rng, 5)) {
      CHECK(p.plus == zero.mu);
      CHECK(p.minus == zero.mu);
    }
    CHECK_THROWS_AS(ask(h, rng, 0), UsageError);
  }

  TEST_CASE("ask covariance matches diag(sigma^2)") {
    const Vector sigma = vec({0.5, 1.0, 2.0});
    HyperPolicy h{vec({1.0, 0.0, -3.0}), sigma.array().log().matrix()};
    Rng rng(7);
    const int n = 10000;
    const auto pairs = ask(h, rng, n);
    Matrix x(n, 3);
    for (int i = 0; i < n; ++i) x.row(i) = pairs[static_cast<std::size_t>(i)].plus.transpose();
    const Matrix c = x.rowwise() - x.colwise().mean();
    const Matrix cov = (c.transpose() * c) / (n - 1);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        // Standard error of a sample (co)variance of Gaussians.
        const double want = a == b ? sigma[a] * sigma[a] : 0.0;
        const double se = a == b ? std::sqrt(2.0 / (n - 1)) * want
                                 : sigma[a] * sigma[b] / std::sqrt(static_cast<double>(n - 1));
        CHECK(std::abs(cov(a, b) - want) < 3.0 * se);
      }
    }
  }

  TEST_CASE("tell is a no-op on symmetric and on constant fitness") {
    PgpeConfig cfg;
    PgpeState st(HyperPolicy::isotropic(vec({0.4, -0.2}), 0.6), cfg);
    Rng rng(3);
    const auto pairs = ask(st.hyper, rng, 2);
    const HyperPolicy before = st.hyper;

    tell(st, pairs, vec({1.0, 5.0}), vec({1.0, 5.0}), cfg, cfg.center_lr);
    CHECK(st.hyper.mu == before.mu);

    PgpeState flat(before, cfg);
    tell(flat, pairs, vec({3.0, 3.0}), vec({3.0, 3.0}), cfg, cfg.center_lr);
    CHECK(flat.hyper.mu == before.mu);
    CHECK(flat.hyper.log_sigma == before.log_sigma);
    CHECK(flat.center_adam.t == 0);

    CHECK_THROWS_AS(tell(flat, pairs, vec({1.0}), vec({1.0, 2.0}), cfg, 0.1), DimensionError);
  }

  TEST_CASE("tell moves the center uphill and applies the log-sigma rule") {
    PgpeConfig cfg;
    cfg.reward_norm = RewardNorm::Off;
    cfg.natural_gradient = false;
    PgpeState st(HyperPolicy::isotropic(vec({0.0}), 0.5), cfg);
    SymmetricPair p{vec({0.5}), vec({-0.5}), vec({1.0})};
    SymmetricPair q{vec({1.0}), vec({-1.0}), vec({2.0})};
    // Hand-computed: f = x, so diffs are 0.5 and 1.0; center gradient
    // mean(diff * eps / sigma) = (0.5 * 2 + 1.0 * 4) / 2 = 2.5; means are 0,
    // baseline 0, so the log-sigma gradient is 0.
    const auto g = estimate_gradients(st.hyper, {p, q}, vec({0.5, 1.0}), vec({-0.5, -1.0}),
                                      RewardNorm::Off, false);
    CHECK(g.center[0] == doctest::Approx(2.5));
    CHECK(g.log_sigma[0] == 0.0);
    tell(st, {p, q}, vec({0.5, 1.0}), vec({-0.5, -1.0}), cfg, 0.05);
    CHECK(st.hyper.mu[0] == doctest::Approx(0.05).epsilon(1e-6));

    // Pair means 3 and -1 around baseline 1: grad = ((2)(1 - 1) + (-2)(4 - 1)) / 2 = -3.
    const auto h = estimate_gradients(st.hyper, {p, q}, vec({3.0, -1.0}), vec({3.0, -1.0}),
                                      RewardNorm::Off, false);
    CHECK(h.log_sigma[0] == doctest::Approx(-3.0));
    CHECK(h.center[0] == 0.0);
  }

  TEST_CASE("vanilla estimator is unbiased on a linear fitness") {
    const Vector c = vec({1.0, -2.0, 0.5});
    HyperPolicy h{vec({0.3, -0.1, 2.0}), vec({0.5, 1.0, 2.0}).array().log().matrix()};
    Rng rng(11);
    const int n = 10000;
    const auto pairs = ask(h, rng, n);
    Vector rp(n), rm(n);
    Matrix per(n, 3);
    for (int i = 0; i < n; ++i) {
      const auto& p = pairs[static_cast<std::size_t>(i)];
      rp[i] = c.dot(p.plus);
      rm[i] = c.dot(p.minus);
      per.row(i) =
          estimate_gradients(h, {p}, rp.segment(i, 1), rm.segment(i, 1), RewardNorm::Off, false)
              .center.transpose();
    }
    const auto g = estimate_gradients(h, pairs, rp, rm, RewardNorm::Off, false);
    const Vector sd = ((per.rowwise() - per.colwise().mean()).array().square().colwise().sum() /
                       (n - 1))
                          .sqrt()
                          .transpose();
    for (int j = 0; j < 3; ++j) CHECK(std::abs(g.center[j] - c[j]) < 3.0 * sd[j] / std::sqrt(n));
  }

  TEST_CASE("center lr anneals linearly") {
    PgpeConfig cfg = PgpeConfig::reacher();
    CHECK(cfg.center_lr_at(0) == doctest::Approx(0.01));
    CHECK(cfg.center_lr_at(199) == doctest::Approx(0.002));
    CHECK(cfg.center_lr_at(99) == doctest::Approx(0.01 * (1.0 - 0.8 * 99.0 / 199.0)));
    CHECK(PgpeConfig::mountain_car().center_lr_at(49) == 0.05);
  }

  TEST_CASE("config validation") {
    PgpeConfig cfg;
    cfg.population = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.anneal_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.center_lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_reward_norm("zscore") == RewardNorm::ZScore);
    CHECK_THROWS_AS(parse_reward_norm("rank"), ConfigError);
  }

  TEST_CASE("1D quadratic converges from mu = 2") {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      PgpeConfig cfg;
      cfg.init_sigma = 0.5;
      // Adam moves about lr per generation; 0.05 cannot cover the distance 2 in 50 steps.
      cfg.center_lr = 0.1;
      cfg.evaluate_center = false;
      const auto r = run_pgpe(cfg, [](const Vector& z) { return -z.squaredNorm(); }, vec({2.0}), seed);
      CHECK(r.log.size() == 50);
      ok += std::abs(r.final_hyper.mu[0]) < 0.1;
    }
    MESSAGE("converged " << ok << "/10");
    CHECK(ok >= 9);
  }

  TEST_CASE("5D sphere reaches -1e-2 within 200 generations") {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      PgpeConfig cfg;
      cfg.population = 10;
      cfg.generations = 200;
      Rng rng(seed + 100);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      Vector mu0(5);
      for (auto& v : mu0) v = u(rng);
      auto f = [](const Vector& x) { return -x.squaredNorm(); };
      const auto r = run_pgpe(cfg, f, mu0, seed);
      double best_center = -1e9;
      for (const auto& g : r.log) best_center = std::max(best_center, g.center_return);
      ok += best_center > -1e-2;
    }
    MESSAGE("reached " << ok << "/10");
    CHECK(ok >= 9);
  }

  TEST_CASE("zero policy on the speed task earns almost nothing") {
    const auto env = mc_env();
    const auto arch = make_architecture(env, PolicySizePreset::Small);
    const auto space = SearchSpace::parameter(arch);
    const auto res = evaluate({Vector::Zero(17)}, space, env, Task::McSpeed, 5, 3);
    CHECK(std::abs(res[0].mean_return) < 0.05);
    CHECK(res[0].env_steps == 3 * 999);
  }

  TEST_CASE("latent with an identity decoder matches parameter evaluation") {
    const auto env = mc_env();
    const auto arch = make_architecture(env, PolicySizePreset::Small);
    const auto pspace = SearchSpace::parameter(arch);
    const auto lspace = SearchSpace::latent(arch, 17, [](const Vector& z) { return z; });
    Rng rng(4);
    std::vector<Vector> cands;
    for (int i = 0; i < 6; ++i) cands.push_back(sample_random(arch, rng));
    const auto a = evaluate(cands, pspace, env, Task::McStandard, 77, 2);
    const auto b = evaluate(cands, lspace, env, Task::McStandard, 77, 2, 3);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      CHECK(a[i].mean_return == b[i].mean_return);
      CHECK(a[i].env_steps == b[i].env_steps);
    }
    CHECK_THROWS_AS(evaluate({Vector::Zero(4)}, pspace, env, Task::McStandard, 1, 1),
                    DimensionError);
  }

  TEST_CASE("runs are reproducible and best-ever return is monotone") {
    const auto env = mc_env();
    const auto arch = make_architecture(env, PolicySizePreset::Small);
    const auto space = SearchSpace::parameter(arch);
    PgpeConfig cfg;
    cfg.generations = 12;
    const auto a = run_pgpe(cfg, space, env, Task::McStandard, Vector::Zero(17), 9);
    cfg.threads = 3;
    const auto b = run_pgpe(cfg, space, env, Task::McStandard, Vector::Zero(17), 9);
    REQUIRE(a.log.size() == 12);
    for (std::size_t g = 0; g < a.log.size(); ++g) {
      CHECK(a.log[g].mean_return == b.log[g].mean_return);
      CHECK(a.log[g].env_steps == b.log[g].env_steps);
      if (g > 0) CHECK(a.log[g].best_return >= a.log[g - 1].best_return);
      CHECK(a.log[g].max_return <= a.log[g].best_return);
    }
    CHECK(a.final_hyper.mu == b.final_hyper.mu);
    CHECK(a.best_candidate == b.best_candidate);
    CHECK(a.env_steps == a.log.back().env_steps);
    CHECK(a.eval_steps > 0);
    CHECK_THROWS_AS(run_pgpe(cfg, space, env, Task::RcSpeed, Vector::Zero(17), 1), UsageError);
  }

  TEST_CASE("latent search leaves the autoencoder untouched") {
    const auto env = mc_env();
    const auto arch = make_architecture(env, PolicySizePreset::Small);
    Matrix data = Matrix::Random(8, 17);
    Rng rng(2);
    auto ae = std::make_shared<AutoencoderParams>(init_autoencoder(arch, 2, standardize_fit(data), rng));
    const Vector before = ae->weights;
    PgpeConfig cfg;
    cfg.generations = 5;
    const auto space = SearchSpace::latent(ae);
    CHECK(space.dim() == 2);
    const auto r = run_pgpe(cfg, space, env, Task::McStandard, median_code(encode_batch(*ae, data)), 3);
    CHECK(r.best_candidate.size() == 2);
    CHECK((ae->weights - before).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("median code") {
    Matrix codes(4, 2);
    codes << 1, 10, 3, -2, 2, 7, 100, 0;
    const Vector m = median_code(codes);
    CHECK(m[0] == 2.5);
    CHECK(m[1] == 3.5);
  }
}
