#pragma once

// Run configuration: one JSON document per run, strict keys, dotted-path
// overrides from the command line.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "polycomp/compressor.hpp"
#include "polycomp/dataset_gen.hpp"
#include "polycomp/latent_pgpe.hpp"
#include "polycomp/persistence.hpp"
#include "polycomp/policy.hpp"

namespace polycomp {

inline constexpr const char* kOutputRootEnv = "POLYCOMP_OUTPUT_ROOT";

struct EvalConfig {
  int episodes = 3;        // rollouts per landscape grid point
  int bound_episodes = 3;  // rollouts per dataset policy
  bool whiskers = false;   // widen the grid to 1.5 IQR beyond the quartiles
};

struct FinetuneConfig {
  Task task = Task::McStandard;
  // auto: latent -> median training code; parameter -> decoded median code
  // when an autoencoder is given, otherwise a random policy.
  std::string init = "auto";
  int final_episodes = 5;  // re-evaluation of the best candidate
};

struct RunConfig {
  EnvId env = EnvId::MountainCar;
  std::vector<Task> tasks;  // empty in JSON means all tasks of the env
  PolicySizePreset preset = PolicySizePreset::Medium;
  GenerationConfig dataset;
  std::size_t latent_dim = 2;
  CompressorTrainConfig compressor;
  PgpeConfig pgpe;
  EvalConfig eval;
  FinetuneConfig finetune;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  int threads = 1;

  void validate() const;
};

// Defaults for an environment (PGPE preset, task list, finetune task).
RunConfig default_config(EnvId env);

// Parses a config document. Unknown keys, wrong types and invalid values throw
// ConfigError. Missing keys keep the environment defaults.
RunConfig parse_config(const Json& doc);
Json config_to_json(const RunConfig& cfg);

// Applies "a.b.c=value" to the document. The value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

// The configured output directory, else $POLYCOMP_OUTPUT_ROOT, else "runs".
std::filesystem::path resolve_output_dir(const RunConfig& cfg);

}  // namespace polycomp
