#pragma once

// Pipeline stages as callable commands, and the command-line entry point.
//
// Every stage writes its artifacts into the run directory and records them in
// manifest.json. Exit codes: 0 success, 2 validation, 3 I/O, 4 numeric.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "polycomp/landscape_eval.hpp"
#include "polycomp/persistence.hpp"
#include "polycomp/run_config.hpp"

namespace polycomp {

namespace artifact {
inline constexpr const char* kDataset = "dataset.bin";
inline constexpr const char* kCheckpoint = "autoencoder.bin";
inline constexpr const char* kLandscape = "landscape.csv";
inline constexpr const char* kRecovery = "recovery.json";
inline constexpr const char* kFinetuneLatent = "finetune_latent.json";
inline constexpr const char* kFinetuneParameter = "finetune_parameter.json";
}  // namespace artifact

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitValidation = 2, kExitIo = 3, kExitNumeric = 4 };

// Maps the current exception onto an exit code and prints it to `err`.
int exit_code_for_current_exception(std::ostream& err);

struct GenDatasetOutput {
  std::filesystem::path path;
  GenerationResult result;
};
GenDatasetOutput cmd_gen_dataset(const RunConfig& cfg, std::ostream& log);

struct TrainAeOutput {
  std::filesystem::path path;
  TrainResult result;
};
// Empty dataset path = <run dir>/dataset.bin.
TrainAeOutput cmd_train_ae(const RunConfig& cfg, std::filesystem::path dataset_path,
                           std::ostream& log);

struct EvalLatentOutput {
  std::filesystem::path csv;
  std::filesystem::path report;
  LatentGrid grid;
  LandscapeResult landscape;
  DatasetReturns dataset;
  RecoveryReport recovery;
};
EvalLatentOutput cmd_eval_latent(const RunConfig& cfg, std::filesystem::path ae_path,
                                 std::filesystem::path dataset_path, std::ostream& log);

struct FinetuneOutput {
  std::filesystem::path path;
  PgpeResult result;
  Vector init;
  double final_return = 0.0;  // best candidate re-evaluated
  Json report;
};
// Latent mode needs a checkpoint: the given path, else <run dir>/autoencoder.bin.
FinetuneOutput cmd_finetune(const RunConfig& cfg, SearchSpace::Kind space,
                            std::filesystem::path ae_path, std::filesystem::path dataset_path,
                            std::ostream& log);

// Averages recovery reports from several runs: bounds are averaged per task
// and the ratio recomputed from the averages.
Json cmd_merge_reports(const std::vector<std::filesystem::path>& inputs,
                       const std::filesystem::path& output, std::ostream& log);

Json recovery_json(const RunConfig& cfg, const EvalLatentOutput& ev);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace polycomp
