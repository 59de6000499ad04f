#include "polycomp/latent_pgpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "polycomp/errors.hpp"
#include "polycomp/parallel.hpp"

namespace polycomp {

HyperPolicy HyperPolicy::isotropic(const Vector& mu, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("hyper-policy: initial sigma must be > 0");
  return {mu, Vector::Constant(mu.size(), std::log(sigma))};
}

RewardNorm parse_reward_norm(std::string_view name) {
  if (name == "off") return RewardNorm::Off;
  if (name == "zscore") return RewardNorm::ZScore;
  throw ConfigError("unknown reward normalization '" + std::string(name) + "' (off | zscore)");
}

std::string_view reward_norm_name(RewardNorm mode) {
  return mode == RewardNorm::Off ? "off" : "zscore";
}

void PgpeConfig::validate() const {
  if (population < 2 || population % 2 != 0)
    throw ConfigError("pgpe: population must be even and >= 2");
  if (!(center_lr > 0.0) || !(sigma_lr > 0.0)) throw ConfigError("pgpe: learning rates must be > 0");
  if (!(init_sigma > 0.0)) throw ConfigError("pgpe: initial sigma must be > 0");
  if (generations < 1) throw ConfigError("pgpe: generations must be >= 1");
  if (!(anneal_fraction > 0.0 && anneal_fraction <= 1.0))
    throw ConfigError("pgpe: anneal fraction must be in (0, 1]");
  if (!(center_beta1 >= 0.0 && center_beta1 < 1.0)) throw ConfigError("pgpe: beta1 must be in [0, 1)");
  if (episodes < 1) throw ConfigError("pgpe: episodes per candidate must be >= 1");
}

double PgpeConfig::center_lr_at(int generation) const {
  if (generations <= 1) return center_lr;
  const double t = static_cast<double>(generation) / static_cast<double>(generations - 1);
  return center_lr * (1.0 + (anneal_fraction - 1.0) * t);
}

PgpeConfig PgpeConfig::mountain_car() { return PgpeConfig{}; }

PgpeConfig PgpeConfig::reacher() {
  PgpeConfig c;
  c.center_lr = 0.01;
  c.population = 10;
  c.init_sigma = 0.3;
  c.sigma_lr = 0.1;
  c.generations = 200;
  c.anneal_fraction = 0.2;
  return c;
}

std::vector<SymmetricPair> ask(const HyperPolicy& hyper, Rng& rng, std::size_t n_pairs) {
  if (n_pairs < 1) throw UsageError("ask: need at least one pair");
  require_dims(hyper.log_sigma.size() == hyper.mu.size(), "ask: mu and log sigma differ in length");
  std::normal_distribution<double> normal;
  const Vector sigma = hyper.sigma();
  std::vector<SymmetricPair> pairs(n_pairs);
  for (auto& p : pairs) {
    p.eps.resize(hyper.mu.size());
    for (Eigen::Index j = 0; j < p.eps.size(); ++j) p.eps[j] = normal(rng);
    const Vector step = sigma.cwiseProduct(p.eps);
    p.plus = hyper.mu + step;
    p.minus = hyper.mu - step;
  }
  return pairs;
}

PgpeGradients estimate_gradients(const HyperPolicy& hyper, const std::vector<SymmetricPair>& pairs,
                                 const Eigen::Ref<const Vector>& returns_plus,
                                 const Eigen::Ref<const Vector>& returns_minus, RewardNorm norm,
                                 bool natural_gradient) {
  const auto n = static_cast<Eigen::Index>(pairs.size());
  require_dims(n >= 1 && returns_plus.size() == n && returns_minus.size() == n,
               "tell: need one return per candidate");
  Vector fp = returns_plus, fm = returns_minus;
  if (!fp.allFinite() || !fm.allFinite()) throw NumericError("tell: non-finite return");

  PgpeGradients g;
  g.center = Vector::Zero(hyper.mu.size());
  g.log_sigma = Vector::Zero(hyper.mu.size());
  const double mean = (fp.sum() + fm.sum()) / static_cast<double>(2 * n);
  const double var =
      ((fp.array() - mean).square().sum() + (fm.array() - mean).square().sum()) /
      static_cast<double>(2 * n);
  if (var == 0.0) {
    g.degenerate = true;
    return g;
  }
  if (norm == RewardNorm::ZScore) {
    const double scale = std::sqrt(var) + 1e-8;
    fp = (fp.array() - mean) / scale;
    fm = (fm.array() - mean) / scale;
  }
  const double baseline = (fp.sum() + fm.sum()) / static_cast<double>(2 * n);
  const Vector sigma = hyper.sigma();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    require_dims(p.eps.size() == hyper.mu.size(), "tell: pair dimension mismatch");
    const double diff = 0.5 * (fp[i] - fm[i]);
    if (natural_gradient)
      g.center += diff * sigma.cwiseProduct(p.eps);
    else
      g.center += diff * p.eps.cwiseQuotient(sigma);
    g.log_sigma += (0.5 * (fp[i] + fm[i]) - baseline) * (p.eps.array().square() - 1.0).matrix();
  }
  g.center /= static_cast<double>(n);
  g.log_sigma /= static_cast<double>(n);
  return g;
}

PgpeState::PgpeState(HyperPolicy h, const PgpeConfig& cfg)
    : hyper(std::move(h)),
      center_adam(hyper.dim(), cfg.center_lr, cfg.center_beta1, 0.999, 1e-8) {}

void tell(PgpeState& state, const std::vector<SymmetricPair>& pairs,
          const Eigen::Ref<const Vector>& returns_plus, const Eigen::Ref<const Vector>& returns_minus,
          const PgpeConfig& cfg, double center_lr) {
  const auto g = estimate_gradients(state.hyper, pairs, returns_plus, returns_minus,
                                    cfg.reward_norm, cfg.natural_gradient);
  if (g.degenerate) return;
  // Adam descends; feed the negated ascent direction.
  const Vector descent = -g.center;
  state.center_adam.lr = center_lr;
  adam_step(state.center_adam,
            std::span<double>(state.hyper.mu.data(), static_cast<std::size_t>(state.hyper.mu.size())),
            view(descent));
  state.hyper.log_sigma += cfg.sigma_lr * g.log_sigma;
}

SearchSpace SearchSpace::parameter(const MlpArchitecture& arch) {
  arch.validate();
  SearchSpace s;
  s.kind_ = Kind::Parameter;
  s.arch_ = arch;
  s.dim_ = param_count(arch);
  return s;
}

SearchSpace SearchSpace::latent(std::shared_ptr<const AutoencoderParams> ae) {
  if (!ae) throw UsageError("latent space: missing autoencoder");
  auto keep = std::move(ae);
  return latent(keep->policy, keep->latent_dim,
                [keep](const Vector& z) { return decode(*keep, z); });
}

SearchSpace SearchSpace::latent(const MlpArchitecture& arch, std::size_t dim, Decoder decoder) {
  arch.validate();
  if (dim < 1 || !decoder) throw UsageError("latent space: need dim >= 1 and a decoder");
  SearchSpace s;
  s.kind_ = Kind::Latent;
  s.arch_ = arch;
  s.dim_ = dim;
  s.decoder_ = std::move(decoder);
  return s;
}

Vector SearchSpace::to_params(const Vector& x) const {
  require_dims(static_cast<std::size_t>(x.size()) == dim_,
               "search space: candidate has length " + std::to_string(x.size()) + ", expected " +
                   std::to_string(dim_));
  if (kind_ == Kind::Parameter) return x;
  Vector theta = decoder_(x);
  require_dims(static_cast<std::size_t>(theta.size()) == param_count(arch_),
               "search space: decoder output does not match the policy architecture");
  return theta;
}

std::vector<CandidateResult> evaluate(const std::vector<Vector>& candidates, const SearchSpace& space,
                                      const EnvConfig& env, Task task, std::uint64_t stream,
                                      int episodes, int threads) {
  if (episodes < 1) throw UsageError("evaluate: episodes must be >= 1");
  require_dims(space.arch().input_dim == env.obs_dim() && space.arch().output_dim == env.act_dim(),
               "evaluate: policy architecture does not fit the environment");
  std::vector<CandidateResult> out(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t i) {
    const Vector theta = space.to_params(candidates[i]);
    PolicyRunner runner(space.arch(), view(theta));
    double total = 0.0;
    long long steps = 0;
    for (int e = 0; e < episodes; ++e) {
      Rng rng = make_rng(stream, "episode", i * static_cast<std::size_t>(episodes) +
                                                static_cast<std::size_t>(e));
      const auto ep = rollout(env, runner, task, rng);
      total += ep.total_return;
      steps += ep.steps;
    }
    out[i] = {total / episodes, steps};
  });
  return out;
}

namespace {

using BatchEval =
    std::function<std::vector<CandidateResult>(const std::vector<Vector>& cands, std::uint64_t gen)>;

PgpeResult pgpe_loop(const PgpeConfig& cfg, const Vector& init_mu, std::uint64_t seed,
                     const BatchEval& eval_candidates, const BatchEval& eval_center) {
  cfg.validate();
  PgpeState state(HyperPolicy::isotropic(init_mu, cfg.init_sigma), cfg);
  PgpeResult res;
  res.best_return = -std::numeric_limits<double>::infinity();
  const std::size_t n_pairs = cfg.pairs();

  for (int g = 0; g < cfg.generations; ++g) {
    const auto gen = static_cast<std::uint64_t>(g);
    Rng ask_rng = make_rng(seed, "pgpe-ask", gen);
    const auto pairs = ask(state.hyper, ask_rng, n_pairs);
    std::vector<Vector> cands;
    cands.reserve(2 * n_pairs);
    for (const auto& p : pairs) {
      cands.push_back(p.plus);
      cands.push_back(p.minus);
    }
    const auto results = eval_candidates(cands, gen);

    Vector rp(static_cast<Eigen::Index>(n_pairs)), rm(static_cast<Eigen::Index>(n_pairs));
    GenerationLog log;
    log.generation = g;
    log.max_return = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const double r = results[i].mean_return;
      (i % 2 == 0 ? rp : rm)[static_cast<Eigen::Index>(i / 2)] = r;
      sum += r;
      res.env_steps += results[i].env_steps;
      log.max_return = std::max(log.max_return, r);
      if (r > res.best_return) {
        res.best_return = r;
        res.best_candidate = cands[i];
        res.best_generation = g;
      }
    }
    log.mean_return = sum / static_cast<double>(cands.size());
    log.center_lr = cfg.center_lr_at(g);
    log.sigma_mean = state.hyper.sigma().mean();
    log.center_return = std::numeric_limits<double>::quiet_NaN();
    if (cfg.evaluate_center) {
      const auto c = eval_center({state.hyper.mu}, gen);
      log.center_return = c[0].mean_return;
      res.eval_steps += c[0].env_steps;
    }
    log.best_return = res.best_return;
    log.env_steps = res.env_steps;
    res.log.push_back(log);

    tell(state, pairs, rp, rm, cfg, log.center_lr);
  }
  res.final_hyper = state.hyper;
  return res;
}

}  // namespace

PgpeResult run_pgpe(const PgpeConfig& cfg, const SearchSpace& space, const EnvConfig& env,
                    Task task, const Vector& init_mu, std::uint64_t seed) {
  cfg.validate();
  if (env_of(task) != env.id) throw UsageError("pgpe: task does not belong to the environment");
  require_dims(static_cast<std::size_t>(init_mu.size()) == space.dim(),
               "pgpe: initial center does not match the search space");
  auto candidates = [&](const std::vector<Vector>& c, std::uint64_t gen) {
    return evaluate(c, space, env, task, derive_seed(seed, "pgpe-eval", gen), cfg.episodes,
                    cfg.threads);
  };
  auto center = [&](const std::vector<Vector>& c, std::uint64_t gen) {
    return evaluate(c, space, env, task, derive_seed(seed, "pgpe-center", gen), cfg.episodes, 1);
  };
  return pgpe_loop(cfg, init_mu, seed, candidates, center);
}

PgpeResult run_pgpe(const PgpeConfig& cfg, const std::function<double(const Vector&)>& fitness,
                    const Vector& init_mu, std::uint64_t seed) {
  auto eval = [&](const std::vector<Vector>& c, std::uint64_t) {
    std::vector<CandidateResult> out(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out[i].mean_return = fitness(c[i]);
    return out;
  };
  return pgpe_loop(cfg, init_mu, seed, eval, eval);
}

Vector median_code(const Eigen::Ref<const Matrix>& codes) {
  if (codes.rows() < 1) throw UsageError("median_code: no codes");
  Vector med(codes.cols());
  std::vector<double> col(static_cast<std::size_t>(codes.rows()));
  for (Eigen::Index c = 0; c < codes.cols(); ++c) {
    for (Eigen::Index r = 0; r < codes.rows(); ++r) col[static_cast<std::size_t>(r)] = codes(r, c);
    std::sort(col.begin(), col.end());
    const std::size_t n = col.size();
    med[c] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return med;
}

}  // namespace polycomp
