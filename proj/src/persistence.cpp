#include "polycomp/persistence.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace polycomp {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

void write_json_atomic(const fs::path& path, const Json& doc) {
  write_file_atomic(path, doc.dump(2) + "\n");
}

Json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string sha1_hex(std::string_view content) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(content.data(), content.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string git_blob_hash(std::string_view content) {
  std::string buf = "blob " + std::to_string(content.size());
  buf.push_back('\0');
  buf.append(content);
  return sha1_hex(buf);
}

std::string file_hash(const fs::path& path) { return git_blob_hash(read_file(path)); }

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p.replace_extension(".json");
  return p;
}

namespace {

class Writer {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::is_floating_point_v<T>) {
      using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
      put(std::bit_cast<U>(v));
    } else {
      auto u = static_cast<std::make_unsigned_t<T>>(v);
      for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
  }
  void raw(std::string_view s) { buf_.append(s); }
  void u32(std::size_t v) {
    if (v > 0xffffffffULL) throw UsageError("value does not fit the file format");
    put(static_cast<std::uint32_t>(v));
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  template <class T>
  T get() {
    if constexpr (std::is_floating_point_v<T>) {
      using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
      return std::bit_cast<T>(get<U>());
    } else {
      need(sizeof(T));
      std::make_unsigned_t<T> u = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i)
        u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
      pos_ += sizeof(T);
      return static_cast<T>(u);
    }
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw IoError(what_ + ": truncated file");
  }
  void finish() const {
    if (pos_ != data_.size()) throw IoError(what_ + ": trailing bytes");
  }
  // Guards element counts read from a header before allocating.
  void check_count(std::uint64_t count, std::size_t elem) const {
    if (elem && count > (data_.size() - pos_) / elem) throw IoError(what_ + ": truncated file");
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

void put_arch(Writer& w, const MlpArchitecture& a) {
  w.u32(a.input_dim);
  w.u32(a.output_dim);
  w.u32(a.hidden.size());
  for (auto h : a.hidden) w.u32(h);
  for (double v : a.state_lower) w.put(v);
  for (double v : a.state_upper) w.put(v);
}

MlpArchitecture get_arch(Reader& r) {
  MlpArchitecture a;
  a.input_dim = r.get<std::uint32_t>();
  a.output_dim = r.get<std::uint32_t>();
  const auto nh = r.get<std::uint32_t>();
  r.check_count(nh, 4);
  for (std::uint32_t i = 0; i < nh; ++i) a.hidden.push_back(r.get<std::uint32_t>());
  r.check_count(a.input_dim, 16);
  a.state_lower.resize(a.input_dim);
  a.state_upper.resize(a.input_dim);
  for (auto& v : a.state_lower) v = r.get<double>();
  for (auto& v : a.state_upper) v = r.get<double>();
  try {
    a.validate();
  } catch (const Error& e) {
    throw IoError(std::string("invalid architecture in file: ") + e.what());
  }
  return a;
}

Json arch_json(const MlpArchitecture& a) {
  return Json{{"input_dim", a.input_dim},
              {"hidden", a.hidden},
              {"output_dim", a.output_dim},
              {"state_lower", a.state_lower},
              {"state_upper", a.state_upper},
              {"param_count", param_count(a)}};
}

EnvId env_from_byte(std::uint8_t b, const std::string& what) {
  if (b > 1) throw IoError(what + ": unknown environment id");
  return b == 0 ? EnvId::MountainCar : EnvId::Reacher;
}

void check_magic(Reader& r, std::string_view magic, std::uint8_t version, const std::string& what) {
  if (r.raw(4) != magic) throw IoError(what + ": bad magic");
  const auto v = r.get<std::uint8_t>();
  if (v != version)
    throw IoError(what + ": unsupported format version " + std::to_string(v));
}

}  // namespace

std::string encode_dataset(const PolicyDataset& ds) {
  require_dims(ds.params.cols() == static_cast<Eigen::Index>(param_count(ds.arch)),
               "dataset: parameter width does not match architecture");
  require_dims(ds.scores.size() == ds.params.rows(), "dataset: score count");
  Writer w;
  w.raw("PCDS");
  w.put(kDatasetFormatVersion);
  w.put(static_cast<std::uint8_t>(ds.probe.env == EnvId::MountainCar ? 0 : 1));
  w.put(static_cast<std::uint8_t>(ds.probe.kind));
  w.put(std::uint8_t{0});
  put_arch(w, ds.arch);
  w.put(static_cast<std::uint64_t>(ds.size()));
  w.put(static_cast<std::uint64_t>(ds.param_dim()));
  w.put(ds.seed);
  w.put(ds.probe.size);
  w.put(ds.probe.seed);
  for (Eigen::Index i = 0; i < ds.params.size(); ++i) w.put(static_cast<float>(ds.params.data()[i]));
  for (Eigen::Index i = 0; i < ds.scores.size(); ++i) w.put(ds.scores[i]);
  return w.take();
}

PolicyDataset decode_dataset(std::string_view bytes) {
  Reader r(bytes, "dataset");
  check_magic(r, "PCDS", kDatasetFormatVersion, "dataset");
  PolicyDataset ds;
  ds.probe.env = env_from_byte(r.get<std::uint8_t>(), "dataset");
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw IoError("dataset: unknown probe kind");
  ds.probe.kind = static_cast<ProbeKind>(kind);
  r.get<std::uint8_t>();
  ds.arch = get_arch(r);
  const auto n = r.get<std::uint64_t>();
  const auto p = r.get<std::uint64_t>();
  if (p != param_count(ds.arch)) throw IoError("dataset: P does not match the architecture");
  ds.seed = r.get<std::uint64_t>();
  ds.probe.size = r.get<std::uint32_t>();
  ds.probe.seed = r.get<std::uint64_t>();
  if (p && n > (bytes.size() / p) / 4) throw IoError("dataset: truncated file");
  r.check_count(n * p, 4);
  ds.params.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < ds.params.size(); ++i) ds.params.data()[i] = r.get<float>();
  r.check_count(n, 8);
  ds.scores.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < ds.scores.size(); ++i) ds.scores[i] = r.get<double>();
  r.finish();
  return ds;
}

Json dataset_header_json(const PolicyDataset& ds) {
  return Json{{"format", "polycomp-dataset"},
              {"format_version", kDatasetFormatVersion},
              {"env", env_name(ds.probe.env)},
              {"architecture", arch_json(ds.arch)},
              {"N", ds.size()},
              {"P", ds.param_dim()},
              {"seed", ds.seed},
              {"probe",
               {{"kind", ds.probe.kind == ProbeKind::Grid ? "grid" : "uniform"},
                {"size", ds.probe.size},
                {"seed", ds.probe.seed}}}};
}

void save_dataset(const PolicyDataset& ds, const fs::path& path) {
  const std::string bytes = encode_dataset(ds);
  write_file_atomic(path, bytes);
  Json side = dataset_header_json(ds);
  side["content_hash"] = git_blob_hash(bytes);
  write_json_atomic(sidecar_path(path), side);
}

PolicyDataset load_dataset(const fs::path& path) { return decode_dataset(read_file(path)); }

std::string encode_checkpoint(const Checkpoint& ck) {
  const AutoencoderParams& ae = ck.ae;
  const auto P = static_cast<Eigen::Index>(ae.param_dim());
  require_dims(ae.stats.mean.size() == P && ae.stats.std.size() == P, "checkpoint: stats width");
  require_dims(static_cast<std::size_t>(ae.weights.size()) ==
                   ae.encoder_weight_count() + ae.decoder_weight_count(),
               "checkpoint: weight count");
  Writer w;
  w.raw("PCAE");
  w.put(kCheckpointFormatVersion);
  w.put(static_cast<std::uint8_t>(ck.env == EnvId::MountainCar ? 0 : 1));
  w.put(std::uint8_t{0});
  w.put(std::uint8_t{0});
  put_arch(w, ae.policy);
  w.u32(ae.latent_dim);
  w.u32(ae.hidden.size());
  for (auto h : ae.hidden) w.u32(h);
  for (Eigen::Index i = 0; i < P; ++i) w.put(ae.stats.mean[i]);
  for (Eigen::Index i = 0; i < P; ++i) w.put(ae.stats.std[i]);
  const auto& c = ck.config;
  w.put(static_cast<std::int32_t>(c.epochs));
  w.put(c.lr);
  w.put(static_cast<std::uint64_t>(c.batch_size));
  w.put(static_cast<std::uint64_t>(c.states_per_step));
  w.put(static_cast<std::uint64_t>(c.validation_states));
  w.put(c.holdout);
  w.put(static_cast<std::int32_t>(c.patience));
  w.put(c.factor);
  w.put(ck.seed);
  w.put(static_cast<std::uint64_t>(ae.weights.size()));
  for (Eigen::Index i = 0; i < ae.weights.size(); ++i) w.put(ae.weights[i]);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes, "checkpoint");
  check_magic(r, "PCAE", kCheckpointFormatVersion, "checkpoint");
  Checkpoint ck;
  ck.env = env_from_byte(r.get<std::uint8_t>(), "checkpoint");
  r.get<std::uint8_t>();
  r.get<std::uint8_t>();
  AutoencoderParams& ae = ck.ae;
  ae.policy = get_arch(r);
  ae.latent_dim = r.get<std::uint32_t>();
  const auto nh = r.get<std::uint32_t>();
  r.check_count(nh, 4);
  ae.hidden.clear();
  for (std::uint32_t i = 0; i < nh; ++i) ae.hidden.push_back(r.get<std::uint32_t>());
  if (ae.latent_dim == 0) throw IoError("checkpoint: latent dimension is zero");
  const auto P = static_cast<Eigen::Index>(ae.param_dim());
  r.check_count(static_cast<std::uint64_t>(P), 16);
  ae.stats.mean.resize(P);
  ae.stats.std.resize(P);
  for (Eigen::Index i = 0; i < P; ++i) ae.stats.mean[i] = r.get<double>();
  for (Eigen::Index i = 0; i < P; ++i) ae.stats.std[i] = r.get<double>();
  auto& c = ck.config;
  c.epochs = r.get<std::int32_t>();
  c.lr = r.get<double>();
  c.batch_size = r.get<std::uint64_t>();
  c.states_per_step = r.get<std::uint64_t>();
  c.validation_states = r.get<std::uint64_t>();
  c.holdout = r.get<double>();
  c.patience = r.get<std::int32_t>();
  c.factor = r.get<double>();
  ck.seed = r.get<std::uint64_t>();
  const auto nw = r.get<std::uint64_t>();
  if (nw != ae.encoder_weight_count() + ae.decoder_weight_count())
    throw IoError("checkpoint: weight count does not match the layer sizes");
  r.check_count(nw, 8);
  ae.weights.resize(static_cast<Eigen::Index>(nw));
  for (Eigen::Index i = 0; i < ae.weights.size(); ++i) ae.weights[i] = r.get<double>();
  r.finish();
  return ck;
}

Json checkpoint_header_json(const Checkpoint& ck) {
  const auto& c = ck.config;
  return Json{{"format", "polycomp-autoencoder"},
              {"format_version", kCheckpointFormatVersion},
              {"env", env_name(ck.env)},
              {"policy_architecture", arch_json(ck.ae.policy)},
              {"latent_dim", ck.ae.latent_dim},
              {"hidden", ck.ae.hidden},
              {"weight_count", ck.ae.weights.size()},
              {"seed", ck.seed},
              {"training",
               {{"epochs", c.epochs},
                {"lr", c.lr},
                {"batch_size", c.batch_size},
                {"states_per_step", c.states_per_step},
                {"validation_states", c.validation_states},
                {"holdout", c.holdout},
                {"patience", c.patience},
                {"factor", c.factor}}}};
}

Json train_report_json(const TrainReport& rep) {
  return Json{{"epochs", rep.train_loss.size()},
              {"train_loss", rep.train_loss},
              {"val_loss", rep.val_loss},
              {"lr", rep.lr},
              {"initial_val_loss", rep.initial_val_loss},
              {"final_val_loss", rep.final_val_loss},
              {"best_epoch", rep.best_epoch},
              {"train_size", rep.train_size},
              {"holdout_size", rep.holdout_size}};
}

void save_checkpoint(const Checkpoint& ck, const TrainReport& report, const fs::path& path) {
  const std::string bytes = encode_checkpoint(ck);
  write_file_atomic(path, bytes);
  Json side = checkpoint_header_json(ck);
  side["content_hash"] = git_blob_hash(bytes);
  side["report"] = train_report_json(report);
  write_json_atomic(sidecar_path(path), side);
}

Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

Manifest::Manifest(fs::path dir) : dir_(std::move(dir)) {
  if (fs::exists(path())) {
    doc_ = read_json(path());
    if (!doc_.is_object() || doc_.value("format_version", 0) != kManifestFormatVersion)
      throw IoError("unsupported manifest " + path().string());
  } else {
    doc_ = Json{{"format_version", kManifestFormatVersion},
                {"artifact_formats",
                 {{"dataset", kDatasetFormatVersion}, {"autoencoder", kCheckpointFormatVersion}}},
                {"stages", Json::object()}};
  }
}

std::string Manifest::key(const fs::path& file) const {
  std::error_code ec;
  const fs::path abs = fs::weakly_canonical(file, ec);
  const fs::path base = fs::weakly_canonical(dir_, ec);
  const fs::path rel = abs.lexically_relative(base);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return abs.generic_string();
}

void Manifest::record_stage(const std::string& stage, const Json& config, double wall_seconds,
                            long long env_steps, const std::vector<fs::path>& inputs,
                            const std::vector<fs::path>& outputs) {
  Json in = Json::object(), out = Json::object();
  for (const auto& f : inputs) in[key(f)] = file_hash(f);
  for (const auto& f : outputs) out[key(f)] = file_hash(f);
  doc_["stages"][stage] = Json{{"config", config},
                               {"wall_seconds", wall_seconds},
                               {"env_steps", env_steps},
                               {"inputs", in},
                               {"outputs", out}};
}

void Manifest::save() const { write_json_atomic(path(), doc_); }

std::string Manifest::recorded_hash(const fs::path& file) const {
  const std::string k = key(file);
  if (!doc_.contains("stages")) return {};
  for (const auto& [name, stage] : doc_.at("stages").items()) {
    if (!stage.contains("outputs")) continue;
    const auto& outs = stage.at("outputs");
    if (outs.contains(k)) return outs.at(k).get<std::string>();
  }
  return {};
}

std::string verify_against_manifest(const fs::path& file) {
  const std::string actual = file_hash(file);
  const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  if (!fs::exists(dir / "manifest.json")) return actual;
  const Manifest m(dir);
  const std::string expected = m.recorded_hash(file);
  if (!expected.empty() && expected != actual)
    throw UsageError(file.string() + " does not match the hash recorded in " + m.path().string() +
                     " (expected " + expected + ", found " + actual + ")");
  return actual;
}

}  // namespace polycomp
