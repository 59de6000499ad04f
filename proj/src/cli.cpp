#include "polycomp/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace polycomp {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

EnvConfig env_config(const RunConfig& cfg) { return EnvConfig{cfg.env, {}, {}}; }

MlpArchitecture run_arch(const RunConfig& cfg) { return make_architecture(env_config(cfg), cfg.preset); }

fs::path or_default(fs::path p, const fs::path& dir, const char* name) {
  return p.empty() ? dir / name : p;
}

PolicyDataset load_checked_dataset(const RunConfig& cfg, const fs::path& path) {
  verify_against_manifest(path);
  PolicyDataset ds = load_dataset(path);
  if (ds.probe.env != cfg.env) throw ConfigError("dataset " + path.string() + " belongs to another env");
  if (!(ds.arch == run_arch(cfg)))
    throw ConfigError("dataset architecture (P = " + std::to_string(ds.param_dim()) +
                      ") does not match preset " + std::string(preset_name(cfg.preset)));
  return ds;
}

Checkpoint load_checked_checkpoint(const RunConfig& cfg, const fs::path& path) {
  verify_against_manifest(path);
  Checkpoint ck = load_checkpoint(path);
  if (ck.env != cfg.env) throw ConfigError("checkpoint " + path.string() + " belongs to another env");
  if (!(ck.ae.policy == run_arch(cfg)))
    throw ConfigError("checkpoint policy architecture does not match preset " +
                      std::string(preset_name(cfg.preset)));
  return ck;
}

void record(const RunConfig& cfg, const fs::path& dir, const std::string& stage, double secs,
            long long steps, const std::vector<fs::path>& in, const std::vector<fs::path>& out) {
  Manifest m(dir);
  m.record_stage(stage, config_to_json(cfg), secs, steps, in, out);
  m.save();
}

Json bounds_json(const ReturnBounds& b) { return Json{{"lower", b.lower}, {"upper", b.upper}}; }

// NaN is not representable in JSON; null stands in for it.
Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {  // usage, config, dimension
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

GenDatasetOutput cmd_gen_dataset(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto t0 = Clock::now();
  const fs::path dir = resolve_output_dir(cfg);
  GenerationConfig gen = cfg.dataset;
  gen.threads = cfg.threads;
  GenDatasetOutput out;
  out.result = generate_dataset(run_arch(cfg), env_config(cfg), gen, derive_seed(cfg.seed, "dataset"));
  out.path = dir / artifact::kDataset;
  save_dataset(out.result.dataset, out.path);
  record(cfg, dir, "gen-dataset", seconds_since(t0), 0, {}, {out.path, sidecar_path(out.path)});

  const auto& ds = out.result.dataset;
  log << "dataset " << out.path.string() << ": N=" << ds.size() << " P=" << ds.param_dim() << '\n';
  log << "novelty (pool of " << out.result.pool_scores.size() << "): mean " << out.result.pool_scores.mean()
      << ", kept min " << ds.scores.minCoeff() << " mean " << ds.scores.mean() << " max "
      << ds.scores.maxCoeff() << '\n';
  return out;
}

TrainAeOutput cmd_train_ae(const RunConfig& cfg, fs::path dataset_path, std::ostream& log) {
  cfg.validate();
  const auto t0 = Clock::now();
  const fs::path dir = resolve_output_dir(cfg);
  dataset_path = or_default(dataset_path, dir, artifact::kDataset);
  const PolicyDataset ds = load_checked_dataset(cfg, dataset_path);
  const StateProbe probe = build_state_probe(env_config(cfg), ds.probe.seed);
  if (static_cast<std::uint32_t>(probe.states.rows()) != ds.probe.size || probe.kind != ds.probe.kind)
    throw IoError("dataset probe descriptor does not match the rebuilt probe");
  CompressorTrainConfig tc = cfg.compressor;
  tc.threads = cfg.threads;
  const std::uint64_t seed = derive_seed(cfg.seed, "compressor");

  TrainAeOutput out;
  out.result = train_autoencoder(ds, probe, cfg.latent_dim, tc, seed);
  out.path = dir / artifact::kCheckpoint;
  Checkpoint ck{cfg.env, out.result.ae, cfg.compressor, seed};
  save_checkpoint(ck, out.result.report, out.path);
  record(cfg, dir, "train-ae", seconds_since(t0), 0, {dataset_path},
         {out.path, sidecar_path(out.path)});

  const auto& rep = out.result.report;
  log << "autoencoder " << out.path.string() << ": k=" << cfg.latent_dim << " epochs=" << rep.train_loss.size()
      << " val loss " << rep.initial_val_loss << " -> " << rep.final_val_loss << " (best epoch "
      << rep.best_epoch << ")\n";
  return out;
}

// Undefined ratios are stored as null.
static Json ratio_json(double r) { return std::isnan(r) ? Json(nullptr) : Json(r); }

static std::string ratio_str(const Json& r) {
  if (r.is_null()) return "undefined (flat dataset returns)";
  std::ostringstream s;
  s << r.get<double>();
  return s.str();
}

Json recovery_json(const RunConfig& cfg, const EvalLatentOutput& ev) {
  Json tasks = Json::array();
  for (const auto& e : ev.recovery.entries)
    tasks.push_back(Json{{"task", task_name(e.task)},
                         {"dataset", bounds_json(e.dataset)},
                         {"latent", bounds_json(e.latent)},
                         {"recovery", ratio_json(e.recovery)}});
  Json widened = Json::array();
  for (auto d : ev.grid.widened) widened.push_back(d);
  return Json{{"env", env_name(cfg.env)},
              {"preset", preset_name(cfg.preset)},
              {"latent_dim", ev.grid.dim()},
              {"seed", cfg.seed},
              {"grid",
               {{"points", ev.grid.points},
                {"size", ev.grid.size()},
                {"lower", vector_json(ev.grid.lower)},
                {"upper", vector_json(ev.grid.upper)},
                {"whiskers", cfg.eval.whiskers},
                {"widened", widened}}},
              {"episodes", cfg.eval.episodes},
              {"bound_episodes", cfg.eval.bound_episodes},
              {"dataset_size", ev.dataset.returns.rows()},
              {"tasks", tasks},
              {"mean_recovery", ratio_json(ev.recovery.mean_recovery)},
              {"env_steps", ev.landscape.env_steps + ev.dataset.env_steps}};
}

EvalLatentOutput cmd_eval_latent(const RunConfig& cfg, fs::path ae_path, fs::path dataset_path,
                                 std::ostream& log) {
  cfg.validate();
  const auto t0 = Clock::now();
  const fs::path dir = resolve_output_dir(cfg);
  ae_path = or_default(ae_path, dir, artifact::kCheckpoint);
  dataset_path = or_default(dataset_path, dir, artifact::kDataset);
  const Checkpoint ck = load_checked_checkpoint(cfg, ae_path);
  const PolicyDataset ds = load_checked_dataset(cfg, dataset_path);
  auto ae = std::make_shared<const AutoencoderParams>(ck.ae);
  const EnvConfig env = env_config(cfg);

  EvalLatentOutput out;
  out.grid = fit_grid(encode_batch(*ae, ds.params), {.whiskers = cfg.eval.whiskers});
  for (auto d : out.grid.widened)
    log << "warning: latent dimension " << d << " has zero interquartile range; widened by 1e-6\n";
  out.landscape = evaluate_landscape(ae, out.grid, env, cfg.tasks, cfg.eval.episodes,
                                     derive_seed(cfg.seed, "eval-landscape"), cfg.threads);
  out.dataset = dataset_bounds(ds, env, cfg.tasks, cfg.eval.bound_episodes,
                               derive_seed(cfg.seed, "eval-bounds"), cfg.threads);
  out.recovery = recovery_report(out.dataset.tasks, out.dataset.bounds, out.landscape);

  out.csv = dir / artifact::kLandscape;
  auto written = export_heatmap(out.landscape, out.csv);
  out.report = dir / artifact::kRecovery;
  write_json_atomic(out.report, recovery_json(cfg, out));
  written.push_back(out.report);
  record(cfg, dir, "eval-latent", seconds_since(t0), out.landscape.env_steps + out.dataset.env_steps,
         {ae_path, dataset_path}, written);

  for (const auto& e : out.recovery.entries)
    log << task_name(e.task) << ": dataset [" << e.dataset.lower << ", " << e.dataset.upper
        << "] latent max " << e.latent.upper << " recovery " << ratio_str(ratio_json(e.recovery)) << '\n';
  return out;
}

FinetuneOutput cmd_finetune(const RunConfig& cfg, SearchSpace::Kind kind, fs::path ae_path,
                            fs::path dataset_path, std::ostream& log) {
  cfg.validate();
  const auto t0 = Clock::now();
  const fs::path dir = resolve_output_dir(cfg);
  const bool latent = kind == SearchSpace::Kind::Latent;
  const MlpArchitecture arch = run_arch(cfg);
  const EnvConfig env = env_config(cfg);
  std::vector<fs::path> inputs;

  std::shared_ptr<const AutoencoderParams> ae;
  if (ae_path.empty() && fs::exists(dir / artifact::kCheckpoint)) ae_path = dir / artifact::kCheckpoint;
  if (latent && ae_path.empty())
    throw UsageError("finetune in latent space needs an autoencoder checkpoint (--ae)");
  if (!ae_path.empty()) {
    ae = std::make_shared<const AutoencoderParams>(load_checked_checkpoint(cfg, ae_path).ae);
    inputs.push_back(ae_path);
  }
  std::optional<PolicyDataset> ds;
  if (dataset_path.empty() && fs::exists(dir / artifact::kDataset)) dataset_path = dir / artifact::kDataset;
  if (!dataset_path.empty()) {
    ds = load_checked_dataset(cfg, dataset_path);
    inputs.push_back(dataset_path);
  }

  const SearchSpace space = latent ? SearchSpace::latent(ae) : SearchSpace::parameter(arch);
  const std::uint64_t seed = derive_seed(cfg.seed, "finetune");
  Rng init_rng = make_rng(cfg.seed, "finetune-init");
  FinetuneOutput out;
  std::string init_desc = cfg.finetune.init;
  if (cfg.finetune.init == "zero") {
    out.init = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
  } else if (cfg.finetune.init == "random") {
    const Vector theta = sample_random(arch, init_rng, cfg.dataset.sample_scale);
    out.init = latent ? encode(*ae, theta) : theta;
  } else if (ae && ds) {
    const Vector code = median_code(encode_batch(*ae, ds->params));
    out.init = latent ? code : decode(*ae, code);
    init_desc = latent ? "median-code" : "decoded-median-code";
  } else if (latent) {
    out.init = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
    init_desc = "zero";
  } else {
    out.init = sample_random(arch, init_rng, cfg.dataset.sample_scale);
    init_desc = "random";
  }

  PgpeConfig pc = cfg.pgpe;
  pc.threads = cfg.threads;
  out.result = run_pgpe(pc, space, env, cfg.finetune.task, out.init, seed);
  const auto fin = evaluate({out.result.best_candidate}, space, env, cfg.finetune.task,
                            derive_seed(cfg.seed, "finetune-final"), cfg.finetune.final_episodes);
  out.final_return = fin[0].mean_return;

  Json curve = Json::array();
  for (const auto& g : out.result.log)
    curve.push_back(Json{{"generation", g.generation},
                         {"mean_return", g.mean_return},
                         {"max_return", g.max_return},
                         {"center_return", number_or_null(g.center_return)},
                         {"best_return", g.best_return},
                         {"sigma_mean", g.sigma_mean},
                         {"center_lr", g.center_lr},
                         {"env_steps", g.env_steps}});
  const Json echo = config_to_json(cfg);
  out.report = Json{{"space", latent ? "latent" : "parameter"},
                    {"env", env_name(cfg.env)},
                    {"task", task_name(cfg.finetune.task)},
                    {"preset", preset_name(cfg.preset)},
                    {"dim", space.dim()},
                    {"seed", cfg.seed},
                    {"init", init_desc},
                    {"pgpe", echo.at("pgpe")},
                    {"best_return", out.result.best_return},
                    {"best_generation", out.result.best_generation},
                    {"final_return", out.final_return},
                    {"final_episodes", cfg.finetune.final_episodes},
                    {"env_steps", out.result.env_steps},
                    {"eval_steps", out.result.eval_steps + fin[0].env_steps},
                    {"best_candidate", vector_json(out.result.best_candidate)},
                    {"final_mu", vector_json(out.result.final_hyper.mu)},
                    {"curve", curve}};
  out.path = dir / (latent ? artifact::kFinetuneLatent : artifact::kFinetuneParameter);
  write_json_atomic(out.path, out.report);
  record(cfg, dir, latent ? "finetune-latent" : "finetune-parameter", seconds_since(t0),
         out.result.env_steps + out.result.eval_steps + fin[0].env_steps, inputs, {out.path});

  log << "finetune (" << (latent ? "latent" : "parameter") << ", " << task_name(cfg.finetune.task)
      << "): best " << out.result.best_return << " at generation " << out.result.best_generation
      << ", re-evaluated " << out.final_return << ", " << out.result.env_steps << " env steps\n";
  return out;
}

Json cmd_merge_reports(const std::vector<fs::path>& inputs, const fs::path& output, std::ostream& log) {
  if (inputs.size() < 2) throw UsageError("merge-reports needs at least two reports");
  std::vector<Json> docs;
  for (const auto& p : inputs) docs.push_back(read_json(p));
  const Json& first = docs.front();
  const auto& tasks0 = first.at("tasks");
  Json merged_tasks = Json::array();
  double sum_recovery = 0.0;
  std::size_t defined = 0;
  for (std::size_t t = 0; t < tasks0.size(); ++t) {
    const std::string name = tasks0[t].at("task").get<std::string>();
    double dl = 0, du = 0, ll = 0, lu = 0, rec = 0;
    std::size_t rec_runs = 0;
    Json per_run = Json::array();
    for (const auto& d : docs) {
      if (d.at("env") != first.at("env")) throw UsageError("merge-reports: reports come from different envs");
      const auto& ts = d.at("tasks");
      if (ts.size() != tasks0.size() || ts[t].at("task") != name)
        throw UsageError("merge-reports: reports cover different tasks");
      dl += ts[t].at("dataset").at("lower").get<double>();
      du += ts[t].at("dataset").at("upper").get<double>();
      ll += ts[t].at("latent").at("lower").get<double>();
      lu += ts[t].at("latent").at("upper").get<double>();
      if (!ts[t].at("recovery").is_null()) {
        rec += ts[t].at("recovery").get<double>();
        ++rec_runs;
      }
      per_run.push_back(ts[t].at("recovery"));
    }
    const double n = static_cast<double>(docs.size());
    const ReturnBounds db{dl / n, du / n}, lb{ll / n, lu / n};
    double r = std::numeric_limits<double>::quiet_NaN();
    if (!(db.upper <= db.lower)) {
      r = performance_recovery(db.lower, db.upper, lb.upper);
      sum_recovery += r;
      ++defined;
    }
    merged_tasks.push_back(Json{{"task", name},
                                {"dataset", bounds_json(db)},
                                {"latent", bounds_json(lb)},
                                {"recovery", ratio_json(r)},
                                {"mean_run_recovery",
                                 ratio_json(rec_runs ? rec / static_cast<double>(rec_runs)
                                                     : std::numeric_limits<double>::quiet_NaN())},
                                {"run_recovery", per_run}});
  }
  Json sources = Json::array();
  for (const auto& p : inputs) sources.push_back(p.generic_string());
  Json out{{"env", first.at("env")},
           {"runs", docs.size()},
           {"sources", sources},
           {"tasks", merged_tasks},
           {"mean_recovery", ratio_json(defined ? sum_recovery / static_cast<double>(defined)
                                                : std::numeric_limits<double>::quiet_NaN())}};
  if (!output.empty()) write_json_atomic(output, out);
  for (const auto& t : merged_tasks)
    log << t.at("task").get<std::string>() << ": recovery " << ratio_str(t.at("recovery")) << " over "
        << docs.size() << " runs\n";
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Policy-space compression pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir;
  app.add_option("-c,--config", config_path, "JSON run config");
  app.add_option("--set", overrides, "Override a config key, e.g. --set pgpe.generations=20");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--threads", threads, "Worker thread cap");
  app.add_option("-o,--out", out_dir, "Run directory (default $" + std::string(kOutputRootEnv) + " or ./runs)");

  auto* gen = app.add_subcommand("gen-dataset", "Sample, score and filter a policy dataset");
  std::string dataset_path, ae_path, space_name = "latent", merge_out;
  std::vector<std::string> merge_inputs;
  auto* train = app.add_subcommand("train-ae", "Train the autoencoder on a dataset");
  train->add_option("--dataset", dataset_path, "Dataset file (default <run>/dataset.bin)");
  auto* eval = app.add_subcommand("eval-latent", "Latent landscape and performance recovery");
  eval->add_option("--ae", ae_path, "Checkpoint (default <run>/autoencoder.bin)");
  eval->add_option("--dataset", dataset_path, "Dataset file (default <run>/dataset.bin)");
  auto* fine = app.add_subcommand("finetune", "PGPE in latent or parameter space");
  fine->add_option("--space", space_name, "latent or parameter")
      ->check(CLI::IsMember({"latent", "parameter"}));
  fine->add_option("--ae", ae_path, "Checkpoint (latent space; default <run>/autoencoder.bin)");
  fine->add_option("--dataset", dataset_path, "Dataset used for the initial code");
  auto* merge = app.add_subcommand("merge-reports", "Average recovery reports across runs");
  merge->add_option("inputs", merge_inputs, "Recovery JSON files")->required();
  merge->add_option("--output", merge_out, "Merged report path");
  auto* show = app.add_subcommand("show-config", "Print the effective config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (merge->parsed()) {
      cmd_merge_reports({merge_inputs.begin(), merge_inputs.end()}, merge_out, out);
      return kExitOk;
    }
    Json doc = config_path.empty() ? Json::object() : read_json(config_path);
    for (const auto& o : overrides) apply_override(doc, o);
    if (seed) doc["seed"] = *seed;
    if (threads) doc["threads"] = *threads;
    if (!out_dir.empty()) doc["output_dir"] = out_dir;
    RunConfig cfg = parse_config(doc);
    if (cfg.output_dir.empty()) cfg.output_dir = resolve_output_dir(cfg);

    if (show->parsed()) {
      out << config_to_json(cfg).dump(2) << '\n';
    } else if (gen->parsed()) {
      cmd_gen_dataset(cfg, out);
    } else if (train->parsed()) {
      cmd_train_ae(cfg, dataset_path, out);
    } else if (eval->parsed()) {
      cmd_eval_latent(cfg, ae_path, dataset_path, out);
    } else if (fine->parsed()) {
      cmd_finetune(cfg, space_name == "latent" ? SearchSpace::Kind::Latent : SearchSpace::Kind::Parameter,
                   ae_path, dataset_path, out);
    }
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

}  // namespace polycomp
