// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Artifacts go to $POLYCOMP_ACCEPTANCE_DIR (default:
// <tmp>/polycomp_acceptance).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "polycomp/cli.hpp"

using namespace polycomp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

EnvConfig mc_env() { return EnvConfig{EnvId::MountainCar, {}, {}}; }

// Prefixes stage logs so they read as progress under the criterion.
struct Indented : std::ostringstream {
  ~Indented() override {
    std::istringstream in(str());
    for (std::string line; std::getline(in, line);) std::cout << "    " << line << '\n';
    std::cout.flush();
  }
};

// ---------------------------------------------------------------------------

Outcome c1_param_counts() {
  const EnvConfig mc = mc_env();
  const EnvConfig rc{EnvId::Reacher, {}, {}};
  const std::size_t s = param_count(make_architecture(mc, PolicySizePreset::Small));
  const std::size_t m = param_count(make_architecture(mc, PolicySizePreset::Medium));
  const std::size_t l = param_count(make_architecture(mc, PolicySizePreset::Large));
  const std::size_t r = param_count(make_architecture(rc, PolicySizePreset::MediumRc));
  return {s == 17 && m == 1185 && l == 121801 && r == 4738,
          "P = " + std::to_string(s) + ", " + std::to_string(m) + ", " + std::to_string(l) + " (MC), " +
              std::to_string(r) + " (RC)"};
}

double rel_err(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

Outcome c2_gradients() {
  const EnvConfig env = mc_env();
  const MlpArchitecture arch = make_architecture(env, PolicySizePreset::Small);
  const Matrix pool = sample_pool(arch, 20, 1.0, 11);
  const Matrix thetas = pool.topRows(2);
  Rng rng(12);
  AutoencoderParams ae = init_autoencoder(arch, 1, standardize_fit(pool), rng);
  std::uniform_real_distribution<double> up(-1.2, 0.6), uv(-0.07, 0.07);
  Matrix states(10, 2);
  for (Eigen::Index i = 0; i < 10; ++i) states.row(i) << up(rng), uv(rng);

  const Vector grad = behavioral_loss(ae, thetas, states).grad;
  Vector fd(ae.weights.size());
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < ae.weights.size(); ++i) {
    const double w0 = ae.weights[i];
    ae.weights[i] = w0 + h;
    const double lp = behavioral_loss(ae, thetas, states, false).loss;
    ae.weights[i] = w0 - h;
    const double lm = behavioral_loss(ae, thetas, states, false).loss;
    ae.weights[i] = w0;
    fd[i] = (lp - lm) / (2 * h);
  }
  const double e_loss = rel_err(grad, fd);

  std::normal_distribution<double> n(0.0, 1.0);
  Vector g_theta(static_cast<Eigen::Index>(param_count(arch)));
  for (auto& v : g_theta) v = n(rng);
  Vector z(1);
  z << 0.3;
  const Vector pull = decoder_pullback(ae, z, g_theta);
  Vector fdz(1);
  {
    Vector zp = z, zm = z;
    zp[0] += h;
    zm[0] -= h;
    fdz[0] = (g_theta.dot(decode(ae, zp)) - g_theta.dot(decode(ae, zm))) / (2 * h);
  }
  const double e_pull = rel_err(pull, fdz);

  // Layer ops against central differences of <y, g>.
  Matrix w(4, 3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  Vector x(3), b(4), gy(4);
  for (auto& v : x) v = n(rng);
  for (auto& v : b) v = n(rng);
  for (auto& v : gy) v = n(rng);
  const AffineGrads ag = affine_backward(x, w, gy);
  const double hl = 1e-5;
  Vector fx(3), fb(4), fw(12);
  for (int i = 0; i < 3; ++i) {
    Vector xp = x, xm = x;
    xp[i] += hl;
    xm[i] -= hl;
    fx[i] = (gy.dot(affine_forward(xp, w, b)) - gy.dot(affine_forward(xm, w, b))) / (2 * hl);
  }
  for (int i = 0; i < 4; ++i) {
    Vector bp = b, bm = b;
    bp[i] += hl;
    bm[i] -= hl;
    fb[i] = (gy.dot(affine_forward(x, w, bp)) - gy.dot(affine_forward(x, w, bm))) / (2 * hl);
  }
  for (int i = 0; i < 12; ++i) {
    Matrix wp = w, wm = w;
    wp.data()[i] += hl;
    wm.data()[i] -= hl;
    fw[i] = (gy.dot(affine_forward(x, wp, b)) - gy.dot(affine_forward(x, wm, b))) / (2 * hl);
  }
  const Vector agw = Eigen::Map<const Vector>(ag.grad_w.data(), 12);
  Vector xe(6), ge(6);
  xe << -2.0, -0.7, -0.1, 0.2, 0.9, 3.0;
  for (auto& v : ge) v = n(rng);
  Vector fe(6), ft(6);
  for (int i = 0; i < 6; ++i) {
    Vector p = xe, m = xe;
    p[i] += hl;
    m[i] -= hl;
    fe[i] = (ge.dot(elu_forward(p)) - ge.dot(elu_forward(m))) / (2 * hl);
    ft[i] = (ge.dot(tanh_forward(p)) - ge.dot(tanh_forward(m))) / (2 * hl);
  }
  const double e_layer = std::max({rel_err(ag.grad_x, fx), rel_err(ag.grad_b, fb), rel_err(agw, fw),
                                   rel_err(elu_backward(xe, ge), fe),
                                   rel_err(tanh_backward(tanh_forward(xe), ge), ft)});
  std::ostringstream d;
  d << std::scientific << std::setprecision(2) << "loss grad rel err " << e_loss << " over "
    << ae.weights.size() << " weights, pullback " << e_pull << ", layer ops " << e_layer;
  return {e_loss < 1e-4 && e_pull < 1e-4 && e_layer < 1e-6, d.str()};
}

Outcome c3_unbiased() {
  HyperPolicy h;
  h.mu = Vector(3);
  h.mu << 0.5, -1.0, 2.0;
  h.log_sigma = Vector(3);
  h.log_sigma << std::log(0.3), 0.0, std::log(2.0);
  Vector c(3);
  c << 1.0, -2.0, 0.5;
  const int n = 10000;
  Rng rng(21);
  const auto pairs = ask(h, rng, n);
  Matrix per(n, 3);
  Vector rp(n), rm(n);
  for (int i = 0; i < n; ++i) {
    rp[i] = c.dot(pairs[static_cast<std::size_t>(i)].plus);
    rm[i] = c.dot(pairs[static_cast<std::size_t>(i)].minus);
    const auto g = estimate_gradients(h, {pairs[static_cast<std::size_t>(i)]}, rp.segment(i, 1),
                                      rm.segment(i, 1), RewardNorm::Off, false);
    per.row(i) = g.center.transpose();
  }
  const Vector est = estimate_gradients(h, pairs, rp, rm, RewardNorm::Off, false).center;
  bool ok = (est - per.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-9;
  std::ostringstream d;
  d << "estimate";
  for (int j = 0; j < 3; ++j) {
    const Vector col = per.col(j);
    const double se = std::sqrt((col.array() - col.mean()).square().sum() / (n - 1) / n);
    const double z = (est[j] - c[j]) / se;
    ok = ok && std::abs(z) <= 3.0;
    d << " " << fmt(est[j], 4) << " (c=" << c[j] << ", " << fmt(z, 2) << " SE)";
  }
  return {ok, d.str()};
}

Outcome c4_sphere() {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PgpeConfig cfg;
    cfg.population = 10;
    cfg.generations = 200;
    Rng rng = make_rng(seed, "sphere-init");
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector mu0(5);
    for (auto& v : mu0) v = u(rng);
    const auto r = run_pgpe(cfg, [](const Vector& x) { return -x.squaredNorm(); }, mu0, seed);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& g : r.log) best = std::max(best, g.center_return);
    ok += best > -1e-2;
  }
  return {ok >= 9, std::to_string(ok) + "/10 seeds reach f(mu) > -1e-2"};
}

Outcome c5_novelty() {
  const EnvConfig env = mc_env();
  const MlpArchitecture arch = make_architecture(env, PolicySizePreset::Medium);
  int wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix pool = sample_pool(arch, 2000, 1.0, seed);
    const StateProbe probe = build_state_probe(env, seed);
    const Matrix sigs = behavior_signatures(arch, pool, probe);
    const auto kept = select_top_fraction(novelty_scores(sigs, 15), 0.1);
    std::vector<std::size_t> idx(2000);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(seed, "random-subset");
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::size_t> rnd(idx.begin(), idx.begin() + static_cast<long>(kept.size()));
    std::sort(rnd.begin(), rnd.end());
    const double a = mean_pairwise_divergence(sigs, kept);
    const double b = mean_pairwise_divergence(sigs, rnd);
    wins += a > b;
    d << (seed ? ", " : "") << fmt(a, 2) << " vs " << fmt(b, 2);
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds filtered > random (" + d.str() + ")"};
}

// Criterion 6 pipeline for one seed; criterion 7 reuses seed 0.
RunConfig c6_config(std::uint64_t seed) {
  RunConfig cfg = default_config(EnvId::MountainCar);
  cfg.preset = PolicySizePreset::Medium;
  cfg.tasks = {Task::McStandard, Task::McSpeed};
  cfg.dataset.pool_size = 10000;
  cfg.dataset.fraction = 0.1;
  cfg.latent_dim = 2;
  cfg.seed = seed;
  cfg.output_dir = g_work / "c6" / ("seed" + std::to_string(seed));
  return cfg;
}

bool g_c6_seed0_ready = false;

struct C6Seed {
  std::size_t n = 0, p = 0;
  double iqr_standard = 0, iqr_speed = 0, wide_standard = 0, wide_speed = 0;
};

C6Seed run_c6_seed(std::uint64_t seed) {
  RunConfig cfg = c6_config(seed);
  C6Seed out;
  {
    Indented log;
    const auto gen = cmd_gen_dataset(cfg, log);
    out.n = gen.result.dataset.size();
    out.p = gen.result.dataset.param_dim();
    cmd_train_ae(cfg, {}, log);
    const auto narrow = cmd_eval_latent(cfg, {}, {}, log);
    out.iqr_standard = narrow.recovery.entries[0].recovery;
    out.iqr_speed = narrow.recovery.entries[1].recovery;
    write_json_atomic(fs::path(cfg.output_dir) / "recovery_iqr.json", recovery_json(cfg, narrow));
    cfg.eval.whiskers = true;
    log << "whisker grid:\n";
    const auto wide = cmd_eval_latent(cfg, {}, {}, log);
    out.wide_standard = wide.recovery.entries[0].recovery;
    out.wide_speed = wide.recovery.entries[1].recovery;
  }
  if (seed == 0) g_c6_seed0_ready = true;
  return out;
}

Outcome c6_recovery() {
  std::vector<double> is, ip, ws, wp;
  bool shape_ok = true;
  std::vector<fs::path> reports;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::cout << "  seed " << seed << '\n';
    const C6Seed r = run_c6_seed(seed);
    shape_ok = shape_ok && r.n == 1000 && r.p == 1185;
    is.push_back(r.iqr_standard);
    ip.push_back(r.iqr_speed);
    ws.push_back(r.wide_standard);
    wp.push_back(r.wide_speed);
    reports.push_back(fs::path(c6_config(seed).output_dir) / artifact::kRecovery);
  }
  Indented log;
  const Json merged = cmd_merge_reports(reports, g_work / "c6" / "merged_recovery.json", log);
  const double ms = mean_of(ws), mp = mean_of(wp);
  std::ostringstream d;
  d << "N=1000 P=1185 " << (shape_ok ? "ok" : "MISMATCH") << "; whisker grid: standard " << fmt(ms) << " +- "
    << fmt(stderr_of(ws)) << ", speed " << fmt(mp) << " +- " << fmt(stderr_of(wp))
    << "; IQR grid: standard " << fmt(mean_of(is)) << " +- " << fmt(stderr_of(is)) << ", speed "
    << fmt(mean_of(ip)) << " +- " << fmt(stderr_of(ip)) << "; merged-bounds standard "
    << fmt(merged.at("tasks")[0].at("recovery").get<double>()) << ", speed "
    << fmt(merged.at("tasks")[1].at("recovery").get<double>());
  return {shape_ok && ms >= 0.85 && mp >= 0.6, d.str()};
}

PgpeConfig finetune_pgpe() {
  PgpeConfig p = PgpeConfig::mountain_car();
  p.episodes = 3;
  return p;
}

Outcome c7_latent_finetune() {
  if (!g_c6_seed0_ready) {
    std::cout << "  building the criterion 6 seed 0 autoencoder\n";
    run_c6_seed(0);
  }
  const fs::path base = c6_config(0).output_dir;
  int ok = 0;
  std::ostringstream d;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RunConfig cfg = c6_config(0);
    cfg.seed = seed;
    cfg.pgpe = finetune_pgpe();
    cfg.finetune.task = Task::McStandard;
    cfg.finetune.final_episodes = 20;
    cfg.output_dir = g_work / "c7" / ("seed" + std::to_string(seed));
    Indented log;
    const auto r = cmd_finetune(cfg, SearchSpace::Kind::Latent, base / artifact::kCheckpoint,
                                base / artifact::kDataset, log);
    ok += r.final_return >= 90.0;
    d << (seed ? ", " : "") << fmt(r.final_return, 1);
  }
  return {ok >= 7, std::to_string(ok) + "/10 seeds reach >= 90 (20-episode re-evaluation: " + d.str() + ")"};
}

long long steps_to(const PgpeResult& r, double target) {
  for (const auto& g : r.log)
    if (g.max_return >= target) return g.env_steps;
  return std::numeric_limits<long long>::max();
}

std::string steps_str(long long s) {
  return s == std::numeric_limits<long long>::max() ? "never" : std::to_string(s);
}

Outcome c8_sample_efficiency() {
  RunConfig cfg = default_config(EnvId::MountainCar);
  cfg.preset = PolicySizePreset::Large;
  cfg.tasks = {Task::McStandard};
  cfg.dataset.pool_size = 2000;
  cfg.dataset.fraction = 0.1;
  cfg.latent_dim = 2;
  cfg.seed = 0;
  cfg.output_dir = g_work / "c8";
  {
    Indented log;
    cmd_gen_dataset(cfg, log);
    cmd_train_ae(cfg, {}, log);
  }
  const fs::path ae = fs::path(cfg.output_dir) / artifact::kCheckpoint;
  const fs::path ds = fs::path(cfg.output_dir) / artifact::kDataset;
  int wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RunConfig fc = cfg;
    fc.seed = seed;
    fc.pgpe = finetune_pgpe();
    fc.finetune.final_episodes = 1;
    fc.output_dir = g_work / "c8" / ("seed" + std::to_string(seed));
    Indented log;
    const auto lat = cmd_finetune(fc, SearchSpace::Kind::Latent, ae, ds, log);
    const auto par = cmd_finetune(fc, SearchSpace::Kind::Parameter, ae, ds, log);
    const long long sl = steps_to(lat.result, 90.0), sp = steps_to(par.result, 90.0);
    wins += sl < sp;
    d << (seed ? "; " : "") << steps_str(sl) << " vs " << steps_str(sp);
  }
  return {wins >= 7, std::to_string(wins) + "/10 paired seeds latent faster (steps to 90, latent vs parameter: " +
                         d.str() + ")"};
}

int run_tool(std::vector<std::string> args) {
  args.insert(args.begin(), "polycomp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  Indented log;
  return run_cli(static_cast<int>(argv.size()), argv.data(), log, log);
}

Outcome c9_determinism() {
  const std::vector<std::string> files{artifact::kDataset,         "dataset.json",
                                       artifact::kCheckpoint,      "autoencoder.json",
                                       artifact::kLandscape,       "landscape.standard.pgm",
                                       artifact::kRecovery,        artifact::kFinetuneLatent,
                                       artifact::kFinetuneParameter};
  std::map<std::string, std::string> first;
  int failures = 0;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = g_work / "c9" / ("run" + std::to_string(run));
    const std::vector<std::string> base{
        "--set", "preset=small", "--set", "dataset.pool_size=400", "--set", "compressor.epochs=5",
        "--set", "pgpe.generations=10", "--set", "tasks=[\"standard\",\"height\"]", "--seed", "7",
        "--threads", run == 0 ? "1" : "3", "-o", dir.string()};
    for (const auto& stage : std::vector<std::vector<std::string>>{
             {"gen-dataset"}, {"train-ae"}, {"eval-latent"}, {"finetune", "--space", "latent"},
             {"finetune", "--space", "parameter"}}) {
      auto args = base;
      args.insert(args.end(), stage.begin(), stage.end());
      failures += run_tool(args) != 0;
    }
    for (const auto& f : files) {
      const std::string h = fs::exists(dir / f) ? file_hash(dir / f) : "missing";
      if (run == 0) first[f] = h;
      else failures += first[f] != h || h == "missing";
    }
  }
  return {failures == 0, std::to_string(files.size()) + " artifacts compared across reruns (threads 1 vs 3), " +
                             std::to_string(failures) + " mismatches or stage failures"};
}

Outcome c10_reacher() {
  RunConfig cfg = default_config(EnvId::Reacher);
  cfg.preset = PolicySizePreset::MediumRc;
  cfg.dataset.pool_size = 2000;
  cfg.latent_dim = 3;
  cfg.seed = 0;
  cfg.output_dir = g_work / "c10";
  EvalLatentOutput ev;
  {
    Indented log;
    cmd_gen_dataset(cfg, log);
    cmd_train_ae(cfg, {}, log);
    ev = cmd_eval_latent(cfg, {}, {}, log);
  }
  // Observation identities and reward range along random-torque rollouts.
  const ReacherPhysicsConfig phys;
  Rng rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bool inv_ok = true;
  for (int ep = 0; ep < 50; ++ep) {
    ReacherState s = reacher_reset(rng);
    for (int t = 0; t < phys.horizon; ++t) {
      s = reacher_step(s, {u(rng), u(rng)}, phys);
      const auto o = reacher_observe(s);
      inv_ok = inv_ok && std::abs(o[0] * o[0] + o[2] * o[2] - 1.0) < 1e-12 &&
               std::abs(o[1] * o[1] + o[3] * o[3] - 1.0) < 1e-12;
      for (Task task : all_tasks(EnvId::Reacher)) {
        const double r = reacher_reward(task, s, phys);
        inv_ok = inv_ok && (r == 0.0 || r == 1.0);
      }
    }
  }
  const bool grid_ok = ev.grid.size() == 4913 && ev.grid.points == 17;
  std::ostringstream d;
  bool nonzero = false;
  for (std::size_t t = 0; t < ev.landscape.tasks.size(); ++t) {
    const auto col = ev.landscape.returns.col(static_cast<Eigen::Index>(t));
    const auto nz = (col.array() != 0.0).count();
    nonzero = nonzero || nz > 0;
    d << (t ? ", " : "") << task_name(ev.landscape.tasks[t]) << " " << nz << " nonzero (max " << fmt(col.maxCoeff(), 1)
      << ")";
  }
  const bool p_ok = param_count(make_architecture(EnvConfig{EnvId::Reacher, {}, {}}, cfg.preset)) == 4738;
  return {inv_ok && grid_ok && nonzero && p_ok,
          std::string("invariants ") + (inv_ok ? "ok" : "FAILED") + ", grid " + std::to_string(ev.grid.size()) +
              " points, landscape: " + d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const char* env_dir = std::getenv("POLYCOMP_ACCEPTANCE_DIR");
  g_work = env_dir && *env_dir ? fs::path(env_dir) : fs::temp_directory_path() / "polycomp_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    double budget_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all{
      {1, 1, c1_param_counts},      {2, 10, c2_gradients},     {3, 30, c3_unbiased},
      {4, 60, c4_sphere},           {5, 300, c5_novelty},      {6, 3600, c6_recovery},
      {7, 900, c7_latent_finetune}, {8, 3600, c8_sample_efficiency}, {9, 600, c9_determinism},
      {10, 1800, c10_reacher}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  std::vector<std::string> summary;
  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::cout << "criterion " << c.id << " running\n" << std::flush;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::ostringstream line;
    line << "criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << " [" << fmt(secs, 1) << " s, budget "
         << c.budget_s << " s" << (in_budget ? "" : ", OVER BUDGET") << "] " << o.detail;
    std::cout << line.str() << '\n' << std::flush;
    summary.push_back(line.str());
  }
  std::cout << "\nsummary\n";
  for (const auto& s : summary) std::cout << s << '\n';
  return failed == 0 ? 0 : 1;
}
