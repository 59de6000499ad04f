#pragma once

// Latent landscape grids, dataset return bounds and the performance-recovery
// ratio.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "polycomp/compressor.hpp"
#include "polycomp/dataset_gen.hpp"
#include "polycomp/latent_pgpe.hpp"

namespace polycomp {

// Points per dimension for the supported latent sizes:
// 1 -> 100, 2 -> 50, 3 -> 17, 5 -> 5, 8 -> 3. Other sizes throw.
std::size_t grid_points_for(std::size_t latent_dim);

// Linear-interpolation quantile (h = (n - 1) q) of an unsorted sample.
double quantile(std::vector<double> values, double q);

struct GridOptions {
  bool whiskers = false;   // extend to [Q1 - 1.5 IQR, Q3 + 1.5 IQR]
  std::size_t points = 0;  // 0 = table value
};

struct LatentGrid {
  Vector lower;
  Vector upper;
  std::size_t points = 0;
  Matrix coords;                        // points^k x k, last dimension fastest
  std::vector<std::size_t> widened;     // dimensions with Q1 == Q3

  std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
  std::size_t size() const { return static_cast<std::size_t>(coords.rows()); }
};

LatentGrid fit_grid(const Eigen::Ref<const Matrix>& codes, const GridOptions& opts = {});
// Grid over explicit ranges (no quantile fit).
LatentGrid make_grid(const Vector& lower, const Vector& upper, std::size_t points);

struct LandscapeResult {
  Matrix coords;              // G x k
  std::vector<Task> tasks;
  Matrix returns;             // G x tasks
  int episodes = 1;
  std::uint64_t seed = 0;
  long long env_steps = 0;
};

// Decodes every grid point and averages `episodes` rollouts per task. Task t
// draws its episodes from derive_seed(seed, "landscape", t).
LandscapeResult evaluate_landscape(const SearchSpace& space, const LatentGrid& grid,
                                   const EnvConfig& env, const std::vector<Task>& tasks,
                                   int episodes, std::uint64_t seed, int threads = 1);
LandscapeResult evaluate_landscape(std::shared_ptr<const AutoencoderParams> ae,
                                   const LatentGrid& grid, const EnvConfig& env,
                                   const std::vector<Task>& tasks, int episodes,
                                   std::uint64_t seed, int threads = 1);

struct DatasetReturns {
  std::vector<Task> tasks;
  Matrix returns;                     // N x tasks
  std::vector<ReturnBounds> bounds;   // per task, min / max over the dataset
  long long env_steps = 0;
};

DatasetReturns dataset_bounds(const PolicyDataset& dataset, const EnvConfig& env,
                              const std::vector<Task>& tasks, int episodes, std::uint64_t seed,
                              int threads = 1);
void store_bounds(PolicyDataset& dataset, const DatasetReturns& eval);

// (ub_latent - lb_data) / (ub_data - lb_data). Throws NumericError unless
// ub_data > lb_data.
double performance_recovery(double lb_data, double ub_data, double ub_latent);

struct RecoveryEntry {
  Task task;
  ReturnBounds dataset;
  ReturnBounds latent;
  double recovery = 0.0;
};

struct RecoveryReport {
  std::vector<RecoveryEntry> entries;
  double mean_recovery = 0.0;
};

// Latent bounds are the min / max grid returns. Tasks are matched by value;
// every landscape task must appear in `dataset`. A task on which every dataset
// policy scores the same has no defined ratio: its recovery is NaN and it is
// left out of the mean (NaN if no task is defined).
RecoveryReport recovery_report(const std::vector<Task>& tasks,
                               const std::vector<ReturnBounds>& dataset,
                               const LandscapeResult& landscape);

// CSV `z_0,...,z_{k-1},task,mean_return,episodes`, one row per grid point and
// task. For k <= 2 also writes `<stem>.<task>.pgm` next to the CSV: width is
// the z_0 axis, height the z_1 axis (1 for k = 1), brighter = higher return.
// Returns the written paths, CSV first.
std::vector<std::filesystem::path> export_heatmap(const LandscapeResult& result,
                                                  const std::filesystem::path& csv_path);
LandscapeResult import_heatmap(const std::filesystem::path& csv_path, EnvId env);

}  // namespace polycomp
