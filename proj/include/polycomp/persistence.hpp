#pragma once

// Binary dataset and autoencoder files, JSON sidecars, content hashes and the
// run manifest.
//
// Dataset file (little-endian), format version 1:
//   "PCDS" u8 version u8 env u8 probe_kind u8 0
//   architecture block
//   u64 N, u64 P, u64 seed, u32 probe_size, u64 probe_seed
//   f32 params[N * P] (row-major), f64 scores[N]
//
// Autoencoder checkpoint, format version 1:
//   "PCAE" u8 version u8 env u8 0 u8 0
//   architecture block
//   u32 latent_dim, u32 n_hidden, u32 hidden[n_hidden]
//   f64 mean[P], f64 std[P]
//   training config: i32 epochs, f64 lr, u64 batch, u64 states_per_step,
//     u64 validation_states, f64 holdout, i32 patience, f64 factor
//   u64 seed, u64 weight_count, f64 weights[weight_count]
//
// Architecture block: u32 input_dim, u32 output_dim, u32 n_hidden,
//   u32 hidden[n_hidden], f64 state_lower[input_dim], f64 state_upper[input_dim]

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "polycomp/compressor.hpp"
#include "polycomp/dataset_gen.hpp"

namespace polycomp {

using Json = nlohmann::ordered_json;

inline constexpr std::uint8_t kDatasetFormatVersion = 1;
inline constexpr std::uint8_t kCheckpointFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

// Writes to `<path>.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
void write_json_atomic(const std::filesystem::path& path, const Json& doc);
Json read_json(const std::filesystem::path& path);

// Git blob hash: SHA-1 of "blob <size>\0" followed by the content, in hex.
std::string git_blob_hash(std::string_view content);
std::string sha1_hex(std::string_view content);
std::string file_hash(const std::filesystem::path& path);

std::string encode_dataset(const PolicyDataset& ds);
PolicyDataset decode_dataset(std::string_view bytes);
Json dataset_header_json(const PolicyDataset& ds);
// Writes the binary file and `<stem>.json` beside it.
void save_dataset(const PolicyDataset& ds, const std::filesystem::path& path);
PolicyDataset load_dataset(const std::filesystem::path& path);

struct Checkpoint {
  EnvId env = EnvId::MountainCar;
  AutoencoderParams ae;
  CompressorTrainConfig config;
  std::uint64_t seed = 0;
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes);
Json checkpoint_header_json(const Checkpoint& ck);
Json train_report_json(const TrainReport& rep);
// Binary checkpoint plus `<stem>.json` holding the header and the report.
void save_checkpoint(const Checkpoint& ck, const TrainReport& report,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

// manifest.json in a run directory. Each stage entry records the effective
// config, wall-clock seconds, environment steps and the hashes of its inputs
// and outputs (keyed by path relative to the run directory when possible).
class Manifest {
 public:
  explicit Manifest(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path() const { return dir_ / "manifest.json"; }
  const Json& doc() const { return doc_; }

  void record_stage(const std::string& stage, const Json& config, double wall_seconds,
                    long long env_steps, const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs);
  void save() const;

  // Hash recorded for `file` as the output of any stage, or empty.
  std::string recorded_hash(const std::filesystem::path& file) const;

 private:
  std::string key(const std::filesystem::path& file) const;

  std::filesystem::path dir_;
  Json doc_;
};

// Throws UsageError if a manifest next to `file` records a different hash for
// it. Files without a manifest entry pass. Returns the current hash.
std::string verify_against_manifest(const std::filesystem::path& file);

}  // namespace polycomp
