#include "polycomp/dataset_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "polycomp/errors.hpp"
#include "polycomp/parallel.hpp"
#include "polycomp/seeding.hpp"

namespace polycomp {

StateProbe build_state_probe(const EnvConfig& env, std::uint64_t seed) {
  StateProbe probe;
  probe.seed = seed;
  const auto lo = env.obs_lower();
  const auto hi = env.obs_upper();
  if (env.id == EnvId::MountainCar) {
    const int n = kMountainCarGridSide;
    probe.kind = ProbeKind::Grid;
    probe.states.resize(static_cast<Eigen::Index>(n) * n, 2);
    for (int i = 0; i < n; ++i) {
      const double p = lo[0] + (hi[0] - lo[0]) * i / (n - 1);
      for (int j = 0; j < n; ++j) {
        const double v = lo[1] + (hi[1] - lo[1]) * j / (n - 1);
        probe.states(i * n + j, 0) = p;
        probe.states(i * n + j, 1) = v;
      }
    }
    return probe;
  }

  probe.kind = ProbeKind::Uniform;
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> w1(lo[4], hi[4]), w2(lo[5], hi[5]);
  probe.states.resize(kReacherProbeSize, 6);
  for (int r = 0; r < kReacherProbeSize; ++r) {
    const double q1 = angle(rng), q2 = angle(rng);
    probe.states.row(r) << std::cos(q1), std::cos(q2), std::sin(q1), std::sin(q2), w1(rng),
        w2(rng);
  }
  return probe;
}

Matrix behavior_signature(const MlpArchitecture& arch, std::span<const double> theta,
                          const StateProbe& probe) {
  return act_batch(arch, theta, probe.states);
}

Matrix behavior_signatures(const MlpArchitecture& arch, const Eigen::Ref<const Matrix>& params,
                           const StateProbe& probe, int threads) {
  require_dims(static_cast<std::size_t>(params.cols()) == param_count(arch),
               "behavior_signatures: parameter width does not match architecture");
  const Eigen::Index n = params.rows();
  const Eigen::Index width = probe.states.rows() * static_cast<Eigen::Index>(arch.output_dim);
  Matrix out(n, width);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    Vector theta = params.row(row).transpose();
    Matrix sig = act_batch(arch, view(theta), probe.states);
    out.row(row) = Eigen::Map<const Eigen::RowVectorXd>(sig.data(), width);
  });
  return out;
}

double pairwise_divergence(const Eigen::Ref<const Matrix>& sig_a,
                           const Eigen::Ref<const Matrix>& sig_b) {
  require_dims(sig_a.rows() == sig_b.rows() && sig_a.cols() == sig_b.cols(),
               "pairwise_divergence: signature shapes differ");
  return (sig_a - sig_b).norm();
}

Vector novelty_scores(const Eigen::Ref<const Matrix>& signatures, std::size_t k, int threads) {
  const auto n = static_cast<std::size_t>(signatures.rows());
  if (k == 0) throw UsageError("novelty_scores: k must be positive");
  if (n <= k) throw UsageError("novelty_scores: need more signatures than neighbors (N > k)");

  // Screen with squared distances from a Gram block, then recompute the
  // surviving candidates directly. The screening slack covers the rounding of
  // the Gram expansion, so the k nearest are always among the candidates and
  // the scores equal the direct computation.
  const Vector sq = signatures.rowwise().squaredNorm();
  const double sq_max = sq.maxCoeff();
  const double slack_rel = 1e-9;

  Vector scores(static_cast<Eigen::Index>(n));
  constexpr std::size_t kBlock = 128;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t blk) {
    const std::size_t i0 = blk * kBlock, i1 = std::min(n, i0 + kBlock);
    const auto rows = static_cast<Eigen::Index>(i1 - i0);
    const Matrix gram =
        signatures.middleRows(static_cast<Eigen::Index>(i0), rows) * signatures.transpose();
    std::vector<double> approx(n), scratch(n), exact;
    std::vector<std::size_t> cand;
    for (std::size_t i = i0; i < i1; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto gi = static_cast<Eigen::Index>(i - i0);
      for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        approx[j] = sq[ii] + sq[jj] - 2.0 * gram(gi, jj);
      }
      approx[i] = std::numeric_limits<double>::infinity();
      scratch = approx;
      std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1),
                       scratch.end());
      const double cut = scratch[k - 1] + slack_rel * (sq[ii] + sq_max) + 1e-300;
      cand.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (approx[j] <= cut) cand.push_back(j);
      exact.clear();
      for (auto j : cand)
        exact.push_back((signatures.row(ii) - signatures.row(static_cast<Eigen::Index>(j))).norm());
      std::sort(exact.begin(), exact.end());
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += exact[t];
      scores[ii] = acc / static_cast<double>(k);
    }
  });
  return scores;
}

std::vector<std::size_t> select_top_fraction(const Eigen::Ref<const Vector>& scores,
                                             double fraction) {
  if (scores.size() == 0) throw UsageError("filter: empty input");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw UsageError("filter: fraction must be in (0, 1]");
  const auto n = static_cast<std::size_t>(scores.size());
  auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

double mean_pairwise_divergence(const Eigen::Ref<const Matrix>& signatures,
                                const std::vector<std::size_t>& rows) {
  if (rows.size() < 2) throw UsageError("mean_pairwise_divergence: need at least two rows");
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = a + 1; b < rows.size(); ++b, ++pairs)
      acc += (signatures.row(static_cast<Eigen::Index>(rows[a])) -
              signatures.row(static_cast<Eigen::Index>(rows[b])))
                 .norm();
  return acc / static_cast<double>(pairs);
}

PolicyDataset filter_top_percentile(const MlpArchitecture& arch,
                                    const Eigen::Ref<const Matrix>& params,
                                    const Eigen::Ref<const Vector>& scores, double fraction) {
  require_dims(params.rows() == scores.size(), "filter: params and scores disagree on N");
  const auto kept = select_top_fraction(scores, fraction);
  PolicyDataset ds;
  ds.arch = arch;
  ds.params.resize(static_cast<Eigen::Index>(kept.size()), params.cols());
  ds.scores.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(kept[r]);
    ds.params.row(static_cast<Eigen::Index>(r)) = params.row(src);
    ds.scores[static_cast<Eigen::Index>(r)] = scores[src];
  }
  return ds;
}

Matrix sample_pool(const MlpArchitecture& arch, std::size_t pool_size, double scale,
                   std::uint64_t seed) {
  const auto p = static_cast<Eigen::Index>(param_count(arch));
  Matrix pool(static_cast<Eigen::Index>(pool_size), p);
  for (std::size_t i = 0; i < pool_size; ++i) {
    Rng rng = make_rng(seed, "policy", i);
    Vector theta = sample_random(arch, rng, scale);
    // Stored datasets hold 32-bit parameters; round here so memory and disk agree.
    for (Eigen::Index j = 0; j < p; ++j)
      pool(static_cast<Eigen::Index>(i), j) = static_cast<double>(static_cast<float>(theta[j]));
  }
  return pool;
}

GenerationResult generate_dataset(const MlpArchitecture& arch, const EnvConfig& env,
                                  const GenerationConfig& cfg, std::uint64_t seed) {
  arch.validate();
  require_dims(arch.input_dim == env.obs_dim() && arch.output_dim == env.act_dim(),
               "generate_dataset: architecture does not fit the environment");
  if (cfg.pool_size <= cfg.k)
    throw UsageError("generate_dataset: pool size must exceed k");

  const std::uint64_t probe_seed = derive_seed(seed, "probe");
  const StateProbe probe = build_state_probe(env, probe_seed);
  const Matrix pool = sample_pool(arch, cfg.pool_size, cfg.sample_scale, seed);
  const Matrix sigs = behavior_signatures(arch, pool, probe, cfg.threads);

  GenerationResult res;
  res.pool_scores = novelty_scores(sigs, cfg.k, cfg.threads);
  res.kept = select_top_fraction(res.pool_scores, cfg.fraction);
  res.dataset = filter_top_percentile(arch, pool, res.pool_scores, cfg.fraction);
  res.dataset.seed = seed;
  res.dataset.probe = {env.id, probe.kind, static_cast<std::uint32_t>(probe.states.rows()),
                       probe_seed};
  return res;
}

}  // namespace polycomp
