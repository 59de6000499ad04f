#include "polycomp/run_config.hpp"

#include <cstdlib>
#include <functional>
#include <map>

namespace polycomp {

namespace {

using Setter = std::function<void(RunConfig&, const Json&, const std::string&)>;

[[noreturn]] void bad_type(const std::string& key, const char* want) {
  throw ConfigError("config key '" + key + "' must be " + want);
}

long long as_int(const Json& v, const std::string& key) {
  if (!v.is_number_integer()) bad_type(key, "an integer");
  return v.get<long long>();
}

std::uint64_t as_u64(const Json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  bad_type(key, "a non-negative integer");
}

std::size_t as_size(const Json& v, const std::string& key) { return static_cast<std::size_t>(as_u64(v, key)); }

int as_i32(const Json& v, const std::string& key) {
  const long long x = as_int(v, key);
  if (x < INT32_MIN || x > INT32_MAX) bad_type(key, "a 32-bit integer");
  return static_cast<int>(x);
}

double as_double(const Json& v, const std::string& key) {
  if (!v.is_number()) bad_type(key, "a number");
  return v.get<double>();
}

bool as_bool(const Json& v, const std::string& key) {
  if (!v.is_boolean()) bad_type(key, "true or false");
  return v.get<bool>();
}

std::string as_string(const Json& v, const std::string& key) {
  if (!v.is_string()) bad_type(key, "a string");
  return v.get<std::string>();
}

// Library parse errors are UsageError; inside a config they are config errors.
template <class F>
auto config_parse(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const UsageError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

using Table = std::map<std::string, Setter>;

const Table& top_level() {
  static const Table t{
      {"env", [](RunConfig&, const Json&, const std::string&) {}},  // handled first
      {"tasks",
       [](RunConfig& c, const Json& v, const std::string& k) {
         if (!v.is_array()) bad_type(k, "an array of task names");
         c.tasks.clear();
         for (const auto& e : v)
           c.tasks.push_back(config_parse(k, [&] { return parse_task(c.env, as_string(e, k)); }));
         if (c.tasks.empty()) c.tasks = all_tasks(c.env);
       }},
      {"preset",
       [](RunConfig& c, const Json& v, const std::string& k) {
         c.preset = config_parse(k, [&] { return parse_preset(as_string(v, k)); });
       }},
      {"latent_dim", [](RunConfig& c, const Json& v, const std::string& k) { c.latent_dim = as_size(v, k); }},
      {"seed", [](RunConfig& c, const Json& v, const std::string& k) { c.seed = as_u64(v, k); }},
      {"output_dir",
       [](RunConfig& c, const Json& v, const std::string& k) { c.output_dir = as_string(v, k); }},
      {"threads", [](RunConfig& c, const Json& v, const std::string& k) { c.threads = as_i32(v, k); }},
  };
  return t;
}

const std::map<std::string, Table>& sections() {
  static const std::map<std::string, Table> s{
      {"dataset",
       {{"pool_size", [](RunConfig& c, const Json& v, const std::string& k) { c.dataset.pool_size = as_size(v, k); }},
        {"fraction", [](RunConfig& c, const Json& v, const std::string& k) { c.dataset.fraction = as_double(v, k); }},
        {"novelty_k", [](RunConfig& c, const Json& v, const std::string& k) { c.dataset.k = as_size(v, k); }},
        {"sample_scale",
         [](RunConfig& c, const Json& v, const std::string& k) { c.dataset.sample_scale = as_double(v, k); }}}},
      {"compressor",
       {{"epochs", [](RunConfig& c, const Json& v, const std::string& k) { c.compressor.epochs = as_i32(v, k); }},
        {"lr", [](RunConfig& c, const Json& v, const std::string& k) { c.compressor.lr = as_double(v, k); }},
        {"batch_size",
         [](RunConfig& c, const Json& v, const std::string& k) { c.compressor.batch_size = as_size(v, k); }},
        {"states_per_step",
         [](RunConfig& c, const Json& v, const std::string& k) { c.compressor.states_per_step = as_size(v, k); }},
        {"validation_states",
         [](RunConfig& c, const Json& v, const std::string& k) { c.compressor.validation_states = as_size(v, k); }},
        {"holdout", [](RunConfig& c, const Json& v, const std::string& k) { c.compressor.holdout = as_double(v, k); }},
        {"patience", [](RunConfig& c, const Json& v, const std::string& k) { c.compressor.patience = as_i32(v, k); }},
        {"factor", [](RunConfig& c, const Json& v, const std::string& k) { c.compressor.factor = as_double(v, k); }}}},
      {"pgpe",
       {{"population", [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.population = as_size(v, k); }},
        {"center_lr", [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.center_lr = as_double(v, k); }},
        {"sigma_lr", [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.sigma_lr = as_double(v, k); }},
        {"init_sigma", [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.init_sigma = as_double(v, k); }},
        {"generations", [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.generations = as_i32(v, k); }},
        {"anneal_fraction",
         [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.anneal_fraction = as_double(v, k); }},
        {"reward_norm",
         [](RunConfig& c, const Json& v, const std::string& k) {
           c.pgpe.reward_norm = config_parse(k, [&] { return parse_reward_norm(as_string(v, k)); });
         }},
        {"natural_gradient",
         [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.natural_gradient = as_bool(v, k); }},
        {"center_beta1",
         [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.center_beta1 = as_double(v, k); }},
        {"episodes", [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.episodes = as_i32(v, k); }},
        {"evaluate_center",
         [](RunConfig& c, const Json& v, const std::string& k) { c.pgpe.evaluate_center = as_bool(v, k); }}}},
      {"eval",
       {{"episodes", [](RunConfig& c, const Json& v, const std::string& k) { c.eval.episodes = as_i32(v, k); }},
        {"bound_episodes",
         [](RunConfig& c, const Json& v, const std::string& k) { c.eval.bound_episodes = as_i32(v, k); }},
        {"whiskers", [](RunConfig& c, const Json& v, const std::string& k) { c.eval.whiskers = as_bool(v, k); }}}},
      {"finetune",
       {{"task",
         [](RunConfig& c, const Json& v, const std::string& k) {
           c.finetune.task = config_parse(k, [&] { return parse_task(c.env, as_string(v, k)); });
         }},
        {"init", [](RunConfig& c, const Json& v, const std::string& k) { c.finetune.init = as_string(v, k); }},
        {"final_episodes",
         [](RunConfig& c, const Json& v, const std::string& k) { c.finetune.final_episodes = as_i32(v, k); }}}},
  };
  return s;
}

}  // namespace

RunConfig default_config(EnvId env) {
  RunConfig c;
  c.env = env;
  c.tasks = all_tasks(env);
  c.preset = env == EnvId::MountainCar ? PolicySizePreset::Medium : PolicySizePreset::MediumRc;
  c.pgpe = env == EnvId::MountainCar ? PgpeConfig::mountain_car() : PgpeConfig::reacher();
  c.finetune.task = env == EnvId::MountainCar ? Task::McStandard : Task::RcSpeed;
  return c;
}

void RunConfig::validate() const {
  for (Task t : tasks)
    if (env_of(t) != env) throw ConfigError("task " + std::string(task_name(t)) + " does not belong to env");
  if (tasks.empty()) throw ConfigError("no tasks configured");
  if (env_of(finetune.task) != env) throw ConfigError("finetune task does not belong to env");
  if (dataset.pool_size < 2) throw ConfigError("dataset.pool_size must be >= 2");
  if (!(dataset.fraction > 0.0 && dataset.fraction <= 1.0))
    throw ConfigError("dataset.fraction must be in (0, 1]");
  if (dataset.k < 1 || dataset.k >= dataset.pool_size)
    throw ConfigError("dataset.novelty_k must be in [1, pool_size)");
  if (!(dataset.sample_scale > 0.0)) throw ConfigError("dataset.sample_scale must be > 0");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  try {
    compressor.validate();
    pgpe.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  if (eval.episodes < 1 || eval.bound_episodes < 1) throw ConfigError("eval episodes must be >= 1");
  if (finetune.init != "auto" && finetune.init != "zero" && finetune.init != "random")
    throw ConfigError("finetune.init must be auto, zero or random");
  if (finetune.final_episodes < 1) throw ConfigError("finetune.final_episodes must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (env == EnvId::MountainCar && preset == PolicySizePreset::MediumRc)
    throw ConfigError("preset medium-rc is for the reacher env");
}

RunConfig parse_config(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  EnvId env = EnvId::MountainCar;
  if (doc.contains("env"))
    env = config_parse("env", [&] { return parse_env(as_string(doc.at("env"), "env")); });
  RunConfig c = default_config(env);
  const auto& top = top_level();
  const auto& secs = sections();
  for (const auto& [key, val] : doc.items()) {
    if (auto it = top.find(key); it != top.end()) {
      it->second(c, val, key);
    } else if (auto st = secs.find(key); st != secs.end()) {
      if (!val.is_object()) bad_type(key, "an object");
      for (const auto& [sub, sv] : val.items()) {
        const std::string path = key + "." + sub;
        auto h = st->second.find(sub);
        if (h == st->second.end()) throw ConfigError("unknown config key '" + path + "'");
        h->second(c, sv, path);
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json tasks = Json::array();
  for (Task t : c.tasks) tasks.push_back(task_name(t));
  return Json{
      {"env", env_name(c.env)},
      {"tasks", tasks},
      {"preset", preset_name(c.preset)},
      {"latent_dim", c.latent_dim},
      {"seed", c.seed},
      {"output_dir", c.output_dir.generic_string()},
      {"threads", c.threads},
      {"dataset",
       {{"pool_size", c.dataset.pool_size},
        {"fraction", c.dataset.fraction},
        {"novelty_k", c.dataset.k},
        {"sample_scale", c.dataset.sample_scale}}},
      {"compressor",
       {{"epochs", c.compressor.epochs},
        {"lr", c.compressor.lr},
        {"batch_size", c.compressor.batch_size},
        {"states_per_step", c.compressor.states_per_step},
        {"validation_states", c.compressor.validation_states},
        {"holdout", c.compressor.holdout},
        {"patience", c.compressor.patience},
        {"factor", c.compressor.factor}}},
      {"pgpe",
       {{"population", c.pgpe.population},
        {"center_lr", c.pgpe.center_lr},
        {"sigma_lr", c.pgpe.sigma_lr},
        {"init_sigma", c.pgpe.init_sigma},
        {"generations", c.pgpe.generations},
        {"anneal_fraction", c.pgpe.anneal_fraction},
        {"reward_norm", reward_norm_name(c.pgpe.reward_norm)},
        {"natural_gradient", c.pgpe.natural_gradient},
        {"center_beta1", c.pgpe.center_beta1},
        {"episodes", c.pgpe.episodes},
        {"evaluate_center", c.pgpe.evaluate_center}}},
      {"eval",
       {{"episodes", c.eval.episodes},
        {"bound_episodes", c.eval.bound_episodes},
        {"whiskers", c.eval.whiskers}}},
      {"finetune",
       {{"task", task_name(c.finetune.task)},
        {"init", c.finetune.init},
        {"final_episodes", c.finetune.final_episodes}}},
  };
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return root;
  return "runs";
}

}  // namespace polycomp
