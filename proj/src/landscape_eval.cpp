#include "polycomp/landscape_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

namespace polycomp {

std::size_t grid_points_for(std::size_t latent_dim) {
  switch (latent_dim) {
    case 1: return 100;
    case 2: return 50;
    case 3: return 17;
    case 5: return 5;
    case 8: return 3;
    default:
      throw UsageError("no grid resolution for latent dimension " + std::to_string(latent_dim) +
                       " (supported: 1, 2, 3, 5, 8)");
  }
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw UsageError("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw UsageError("quantile: q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

LatentGrid make_grid(const Vector& lower, const Vector& upper, std::size_t points) {
  require_dims(lower.size() == upper.size() && lower.size() > 0, "make_grid: range dimensions");
  if (points < 2) throw UsageError("make_grid: need at least 2 points per dimension");
  const auto k = static_cast<std::size_t>(lower.size());
  std::size_t total = 1;
  for (std::size_t d = 0; d < k; ++d) {
    if (total > (std::size_t{1} << 26) / points) throw UsageError("make_grid: grid too large");
    total *= points;
  }
  LatentGrid g;
  g.lower = lower;
  g.upper = upper;
  g.points = points;
  g.coords.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(k));
  const double denom = static_cast<double>(points - 1);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rem = i;
    for (std::size_t d = k; d-- > 0;) {
      const std::size_t j = rem % points;
      rem /= points;
      const auto dd = static_cast<Eigen::Index>(d);
      g.coords(static_cast<Eigen::Index>(i), dd) =
          lower(dd) + (upper(dd) - lower(dd)) * (static_cast<double>(j) / denom);
    }
  }
  return g;
}

LatentGrid fit_grid(const Eigen::Ref<const Matrix>& codes, const GridOptions& opts) {
  if (codes.rows() < 4) throw UsageError("fit_grid: need at least 4 training codes");
  const auto k = static_cast<std::size_t>(codes.cols());
  const std::size_t points = opts.points ? opts.points : grid_points_for(k);
  Vector lo(codes.cols()), hi(codes.cols());
  std::vector<std::size_t> widened;
  for (Eigen::Index d = 0; d < codes.cols(); ++d) {
    std::vector<double> col(codes.col(d).begin(), codes.col(d).end());
    double q1 = quantile(col, 0.25);
    double q3 = quantile(col, 0.75);
    if (opts.whiskers) {
      const double iqr = q3 - q1;
      q1 -= 1.5 * iqr;
      q3 += 1.5 * iqr;
    }
    if (q1 == q3) {
      q1 -= 1e-6;
      q3 += 1e-6;
      widened.push_back(static_cast<std::size_t>(d));
    }
    lo(d) = q1;
    hi(d) = q3;
  }
  LatentGrid g = make_grid(lo, hi, points);
  g.widened = std::move(widened);
  return g;
}

LandscapeResult evaluate_landscape(const SearchSpace& space, const LatentGrid& grid,
                                   const EnvConfig& env, const std::vector<Task>& tasks,
                                   int episodes, std::uint64_t seed, int threads) {
  require_dims(space.dim() == grid.dim(), "evaluate_landscape: latent dim does not match grid");
  if (tasks.empty()) throw UsageError("evaluate_landscape: no tasks");
  std::vector<Vector> cands(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    cands[i] = grid.coords.row(static_cast<Eigen::Index>(i)).transpose();
  LandscapeResult res;
  res.coords = grid.coords;
  res.tasks = tasks;
  res.episodes = episodes;
  res.seed = seed;
  res.returns.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto out = evaluate(cands, space, env, tasks[t], derive_seed(seed, "landscape", t),
                              episodes, threads);
    for (std::size_t i = 0; i < out.size(); ++i) {
      res.returns(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = out[i].mean_return;
      res.env_steps += out[i].env_steps;
    }
  }
  return res;
}

LandscapeResult evaluate_landscape(std::shared_ptr<const AutoencoderParams> ae,
                                   const LatentGrid& grid, const EnvConfig& env,
                                   const std::vector<Task>& tasks, int episodes,
                                   std::uint64_t seed, int threads) {
  return evaluate_landscape(SearchSpace::latent(std::move(ae)), grid, env, tasks, episodes, seed,
                            threads);
}

DatasetReturns dataset_bounds(const PolicyDataset& dataset, const EnvConfig& env,
                              const std::vector<Task>& tasks, int episodes, std::uint64_t seed,
                              int threads) {
  if (dataset.size() == 0) throw UsageError("dataset_bounds: empty dataset");
  if (tasks.empty()) throw UsageError("dataset_bounds: no tasks");
  const SearchSpace space = SearchSpace::parameter(dataset.arch);
  std::vector<Vector> cands(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    cands[i] = dataset.params.row(static_cast<Eigen::Index>(i)).transpose();
  DatasetReturns res;
  res.tasks = tasks;
  res.returns.resize(static_cast<Eigen::Index>(dataset.size()),
                     static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto out = evaluate(cands, space, env, tasks[t], derive_seed(seed, "dataset-bounds", t),
                              episodes, threads);
    const auto tt = static_cast<Eigen::Index>(t);
    for (std::size_t i = 0; i < out.size(); ++i) {
      res.returns(static_cast<Eigen::Index>(i), tt) = out[i].mean_return;
      res.env_steps += out[i].env_steps;
    }
    res.bounds.push_back({res.returns.col(tt).minCoeff(), res.returns.col(tt).maxCoeff()});
  }
  return res;
}

void store_bounds(PolicyDataset& dataset, const DatasetReturns& eval) {
  for (std::size_t t = 0; t < eval.tasks.size(); ++t)
    dataset.return_bounds[std::string(task_name(eval.tasks[t]))] = eval.bounds[t];
}

double performance_recovery(double lb_data, double ub_data, double ub_latent) {
  if (!std::isfinite(lb_data) || !std::isfinite(ub_data) || !std::isfinite(ub_latent))
    throw NumericError("performance_recovery: non-finite bound");
  if (!(ub_data > lb_data))
    throw NumericError("performance_recovery: dataset bounds are degenerate (ub <= lb)");
  return (ub_latent - lb_data) / (ub_data - lb_data);
}

RecoveryReport recovery_report(const std::vector<Task>& tasks,
                               const std::vector<ReturnBounds>& dataset,
                               const LandscapeResult& landscape) {
  require_dims(tasks.size() == dataset.size(), "recovery_report: tasks and bounds differ in length");
  RecoveryReport rep;
  for (std::size_t t = 0; t < landscape.tasks.size(); ++t) {
    const auto it = std::find(tasks.begin(), tasks.end(), landscape.tasks[t]);
    if (it == tasks.end())
      throw UsageError("recovery_report: no dataset bounds for task " +
                       std::string(task_name(landscape.tasks[t])));
    const ReturnBounds db = dataset[static_cast<std::size_t>(it - tasks.begin())];
    const auto col = landscape.returns.col(static_cast<Eigen::Index>(t));
    RecoveryEntry e{landscape.tasks[t], db, {col.minCoeff(), col.maxCoeff()}, 0.0};
    const bool flat = std::isfinite(db.lower) && std::isfinite(db.upper) && db.upper <= db.lower;
    e.recovery = flat ? std::numeric_limits<double>::quiet_NaN()
                      : performance_recovery(db.lower, db.upper, e.latent.upper);
    rep.entries.push_back(e);
  }
  if (rep.entries.empty()) throw UsageError("recovery_report: landscape has no tasks");
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& e : rep.entries)
    if (!std::isnan(e.recovery)) {
      sum += e.recovery;
      ++defined;
    }
  rep.mean_recovery = defined ? sum / static_cast<double>(defined) : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

namespace {

std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string render_pgm(const LandscapeResult& r, std::size_t t) {
  const auto k = static_cast<std::size_t>(r.coords.cols());
  const auto g = static_cast<std::size_t>(r.coords.rows());
  const std::size_t width = k == 1 ? g : static_cast<std::size_t>(std::llround(std::sqrt(double(g))));
  const std::size_t height = k == 1 ? 1 : width;
  if (width * height != g) throw UsageError("export_heatmap: grid is not square");
  const auto col = r.returns.col(static_cast<Eigen::Index>(t));
  const double lo = col.minCoeff();
  const double span = col.maxCoeff() - lo;
  std::string img = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  // Grid index = i0 * points + i1. Row 0 of the image is the largest z_1.
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i1 = height - 1 - y;
      const std::size_t idx = k == 1 ? x : x * width + i1;
      const double v = col(static_cast<Eigen::Index>(idx));
      const double u = span > 0.0 ? (v - lo) / span : 0.5;
      img.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * u))));
    }
  }
  return img;
}

}  // namespace

std::vector<std::filesystem::path> export_heatmap(const LandscapeResult& result,
                                                  const std::filesystem::path& csv_path) {
  const auto k = static_cast<std::size_t>(result.coords.cols());
  require_dims(result.returns.rows() == result.coords.rows() &&
                   result.returns.cols() == static_cast<Eigen::Index>(result.tasks.size()),
               "export_heatmap: result shape");
  std::ostringstream csv;
  for (std::size_t d = 0; d < k; ++d) csv << "z_" << d << ',';
  csv << "task,mean_return,episodes\n";
  for (Eigen::Index i = 0; i < result.coords.rows(); ++i) {
    for (std::size_t t = 0; t < result.tasks.size(); ++t) {
      for (Eigen::Index d = 0; d < result.coords.cols(); ++d) csv << fmt_exact(result.coords(i, d)) << ',';
      csv << task_name(result.tasks[t]) << ',' << fmt_exact(result.returns(i, static_cast<Eigen::Index>(t)))
          << ',' << result.episodes << '\n';
    }
  }
  write_atomic(csv_path, csv.str());
  std::vector<std::filesystem::path> written{csv_path};
  if (k <= 2) {
    for (std::size_t t = 0; t < result.tasks.size(); ++t) {
      auto img = csv_path;
      img.replace_extension();
      img += "." + std::string(task_name(result.tasks[t])) + ".pgm";
      write_atomic(img, render_pgm(result, t));
      written.push_back(img);
    }
  }
  return written;
}

LandscapeResult import_heatmap(const std::filesystem::path& csv_path, EnvId env) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty heatmap file " + csv_path.string());
  std::size_t k = 0;
  {
    std::stringstream hs(line);
    std::string name;
    while (std::getline(hs, name, ',') && name == "z_" + std::to_string(k)) ++k;
  }
  if (k == 0) throw IoError("heatmap header has no z columns");

  std::vector<std::vector<double>> coords;
  std::vector<Task> tasks;
  std::vector<std::vector<double>> rets;  // per grid point, per task
  LandscapeResult res;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != k + 3) throw IoError("heatmap row has " + std::to_string(f.size()) + " fields");
    std::vector<double> z(k);
    for (std::size_t d = 0; d < k; ++d) z[d] = std::strtod(f[d].c_str(), nullptr);
    const Task task = parse_task(env, f[k]);
    const double ret = std::strtod(f[k + 1].c_str(), nullptr);
    res.episodes = std::stoi(f[k + 2]);
    if (coords.empty() || z != coords.back()) {
      if (!coords.empty() && rets.back().size() != tasks.size())
        throw IoError("heatmap grid point is missing tasks");
      coords.push_back(z);
      rets.emplace_back();
    }
    if (coords.size() == 1) tasks.push_back(task);
    const std::size_t slot = rets.back().size();
    if (slot >= tasks.size() || tasks[slot] != task) throw IoError("heatmap task order is inconsistent");
    rets.back().push_back(ret);
  }
  if (coords.empty() || rets.back().size() != tasks.size()) throw IoError("truncated heatmap file");
  res.tasks = tasks;
  res.coords.resize(static_cast<Eigen::Index>(coords.size()), static_cast<Eigen::Index>(k));
  res.returns.resize(static_cast<Eigen::Index>(coords.size()), static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (std::size_t d = 0; d < k; ++d)
      res.coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = coords[i][d];
    for (std::size_t t = 0; t < tasks.size(); ++t)
      res.returns(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = rets[i][t];
  }
  return res;
}

}  // namespace polycomp
