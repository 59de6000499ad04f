#pragma once

// Stage 1: fixed state probes, behavior signatures, k-NN novelty and
// novelty-based filtering of a randomly sampled policy pool.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "polycomp/core_math.hpp"
#include "polycomp/envs.hpp"
#include "polycomp/policy.hpp"

namespace polycomp {

enum class ProbeKind : std::uint8_t { Grid = 0, Uniform = 1 };

struct StateProbe {
  Matrix states;  // M x |S|
  ProbeKind kind = ProbeKind::Grid;
  std::uint64_t seed = 0;
};

inline constexpr int kMountainCarGridSide = 55;  // 55 x 55 = 3025 states
inline constexpr int kReacherProbeSize = 3000;

// MC: 55x55 grid over position x velocity bounds (corners included).
// RC: uniform joint angles mapped through cos/sin, velocities uniform in
// the declared bounds.
StateProbe build_state_probe(const EnvConfig& env, std::uint64_t seed);

// Rows of the probe's actions, flattened row-major (M * |A| entries).
Matrix behavior_signature(const MlpArchitecture& arch, std::span<const double> theta,
                          const StateProbe& probe);

// N x (M*|A|) matrix, one flattened signature per row of `params`.
Matrix behavior_signatures(const MlpArchitecture& arch, const Eigen::Ref<const Matrix>& params,
                           const StateProbe& probe, int threads = 1);

// Frobenius distance between two signatures.
double pairwise_divergence(const Eigen::Ref<const Matrix>& sig_a,
                           const Eigen::Ref<const Matrix>& sig_b);

// Mean distance to the k nearest other rows. Exact; rows are processed
// independently, so results do not depend on `threads`.
Vector novelty_scores(const Eigen::Ref<const Matrix>& signatures, std::size_t k, int threads = 1);

// Indices (ascending) of the ceil(fraction * N) highest scores; ties go to the
// lower index.
std::vector<std::size_t> select_top_fraction(const Eigen::Ref<const Vector>& scores,
                                             double fraction);

// Mean Frobenius distance over all unordered pairs of the selected rows.
double mean_pairwise_divergence(const Eigen::Ref<const Matrix>& signatures,
                                const std::vector<std::size_t>& rows);

struct ProbeDescriptor {
  EnvId env = EnvId::MountainCar;
  ProbeKind kind = ProbeKind::Grid;
  std::uint32_t size = 0;
  std::uint64_t seed = 0;
};

struct ReturnBounds {
  double lower = 0.0;
  double upper = 0.0;
};

struct PolicyDataset {
  MlpArchitecture arch;
  // N x P. Values are rounded to 32-bit precision so that the in-memory
  // dataset equals what is stored on disk.
  Matrix params;
  Vector scores;
  std::uint64_t seed = 0;
  ProbeDescriptor probe;
  std::map<std::string, ReturnBounds> return_bounds;  // filled by evaluation

  std::size_t size() const { return static_cast<std::size_t>(params.rows()); }
  std::size_t param_dim() const { return static_cast<std::size_t>(params.cols()); }
};

PolicyDataset filter_top_percentile(const MlpArchitecture& arch,
                                    const Eigen::Ref<const Matrix>& params,
                                    const Eigen::Ref<const Vector>& scores, double fraction);

struct GenerationConfig {
  std::size_t pool_size = 10000;
  double fraction = 0.10;
  std::size_t k = 15;
  double sample_scale = 1.0;
  int threads = 1;
};

struct GenerationResult {
  PolicyDataset dataset;
  Vector pool_scores;                // novelty of every pool member
  std::vector<std::size_t> kept;     // pool indices retained
};

GenerationResult generate_dataset(const MlpArchitecture& arch, const EnvConfig& env,
                                  const GenerationConfig& cfg, std::uint64_t seed);

// Regenerates the sampled pool (before filtering) for a given seed. Used by
// diagnostics that compare the filtered set against random subsets.
Matrix sample_pool(const MlpArchitecture& arch, std::size_t pool_size, double scale,
                   std::uint64_t seed);

}  // namespace polycomp
