#pragma once

// Stage 3: PGPE with symmetric sampling, over latent codes decoded by a frozen
// autoencoder or directly over policy parameters.

#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include "polycomp/compressor.hpp"
#include "polycomp/core_math.hpp"
#include "polycomp/envs.hpp"
#include "polycomp/policy.hpp"
#include "polycomp/seeding.hpp"

namespace polycomp {

struct HyperPolicy {
  Vector mu;
  Vector log_sigma;

  std::size_t dim() const { return static_cast<std::size_t>(mu.size()); }
  Vector sigma() const { return log_sigma.array().exp().matrix(); }
  static HyperPolicy isotropic(const Vector& mu, double sigma);
};

enum class RewardNorm { Off, ZScore };
RewardNorm parse_reward_norm(std::string_view name);
std::string_view reward_norm_name(RewardNorm mode);

struct PgpeConfig {
  std::size_t population = 4;  // individuals; two per symmetric pair
  double center_lr = 0.05;
  double sigma_lr = 0.1;
  double init_sigma = 0.6;
  int generations = 50;
  double anneal_fraction = 1.0;  // final center lr as a fraction of the initial one
  RewardNorm reward_norm = RewardNorm::ZScore;
  bool natural_gradient = true;
  double center_beta1 = 0.2;
  int episodes = 1;             // rollouts averaged per candidate
  bool evaluate_center = true;  // one extra rollout of mu per generation, logged only
  int threads = 1;

  void validate() const;
  std::size_t pairs() const { return population / 2; }
  // Center lr in effect at generation g (0-based), linear anneal.
  double center_lr_at(int generation) const;

  static PgpeConfig mountain_car();
  static PgpeConfig reacher();
};

struct SymmetricPair {
  Vector plus;
  Vector minus;
  Vector eps;
};

// x+ = mu + sigma * eps, x- = mu - sigma * eps with eps ~ N(0, I).
std::vector<SymmetricPair> ask(const HyperPolicy& hyper, Rng& rng, std::size_t n_pairs);

struct PgpeGradients {
  Vector center;     // ascent direction for mu
  Vector log_sigma;  // ascent direction for log sigma
  bool degenerate = false;  // all fitnesses equal
};

PgpeGradients estimate_gradients(const HyperPolicy& hyper, const std::vector<SymmetricPair>& pairs,
                                 const Eigen::Ref<const Vector>& returns_plus,
                                 const Eigen::Ref<const Vector>& returns_minus,
                                 RewardNorm norm, bool natural_gradient);

struct PgpeState {
  HyperPolicy hyper;
  AdamState center_adam;

  PgpeState(HyperPolicy h, const PgpeConfig& cfg);
};

// One update. A generation whose fitnesses are all equal leaves the state
// untouched, optimizer moments included.
void tell(PgpeState& state, const std::vector<SymmetricPair>& pairs,
          const Eigen::Ref<const Vector>& returns_plus, const Eigen::Ref<const Vector>& returns_minus,
          const PgpeConfig& cfg, double center_lr);

// Where candidates live and how they turn into policy parameters.
class SearchSpace {
 public:
  enum class Kind { Latent, Parameter };
  using Decoder = std::function<Vector(const Vector&)>;

  static SearchSpace parameter(const MlpArchitecture& arch);
  static SearchSpace latent(std::shared_ptr<const AutoencoderParams> ae);
  // Latent space over an arbitrary decoder; used by tests.
  static SearchSpace latent(const MlpArchitecture& arch, std::size_t dim, Decoder decoder);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  const MlpArchitecture& arch() const { return arch_; }
  Vector to_params(const Vector& x) const;

 private:
  Kind kind_ = Kind::Parameter;
  std::size_t dim_ = 0;
  MlpArchitecture arch_;
  Decoder decoder_;
};

struct CandidateResult {
  double mean_return = 0.0;
  long long env_steps = 0;
};

// Mean return of each candidate over `episodes` rollouts. Episode e of
// candidate i draws its reset from derive_seed(stream, "episode", i * episodes + e).
std::vector<CandidateResult> evaluate(const std::vector<Vector>& candidates, const SearchSpace& space,
                                      const EnvConfig& env, Task task, std::uint64_t stream,
                                      int episodes, int threads = 1);

struct GenerationLog {
  int generation = 0;
  double mean_return = 0.0;
  double max_return = 0.0;
  double center_return = 0.0;  // NaN when the center is not evaluated
  double best_return = 0.0;    // best candidate so far
  double sigma_mean = 0.0;
  double center_lr = 0.0;
  long long env_steps = 0;     // cumulative fine-tuning steps (candidates only)
};

struct PgpeResult {
  Vector best_candidate;
  double best_return = 0.0;
  int best_generation = -1;
  HyperPolicy final_hyper;
  std::vector<GenerationLog> log;
  long long env_steps = 0;   // candidate rollouts
  long long eval_steps = 0;  // center rollouts, not part of fine-tuning cost
};

PgpeResult run_pgpe(const PgpeConfig& cfg, const SearchSpace& space, const EnvConfig& env,
                    Task task, const Vector& init_mu, std::uint64_t seed);

// Same loop on a deterministic fitness function; env_steps stay zero.
PgpeResult run_pgpe(const PgpeConfig& cfg, const std::function<double(const Vector&)>& fitness,
                    const Vector& init_mu, std::uint64_t seed);

// Coordinatewise median of the rows.
Vector median_code(const Eigen::Ref<const Matrix>& codes);

}  // namespace polycomp
