#include "polycomp/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "polycomp/errors.hpp"
#include "polycomp/parallel.hpp"
#include "polycomp/seeding.hpp"

namespace polycomp {

namespace {

// Activations of a dense chain: acts[0] is the input, acts[l + 1] the output
// of layer l. Hidden layers use ELU, the last layer is linear.
std::vector<Matrix> chain_forward(const double* w, const std::vector<std::size_t>& sizes,
                                  const Eigen::Ref<const Matrix>& x) {
  std::vector<Matrix> acts;
  acts.reserve(sizes.size());
  acts.emplace_back(x);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    ConstMatrixMap wm(w + off, out, in);
    Eigen::Map<const Eigen::RowVectorXd> b(w + off + out * in, out);
    Matrix y(acts.back().rows(), out);
    y.noalias() = acts.back() * wm.transpose();
    y.rowwise() += b;
    if (l + 2 < sizes.size()) elu_inplace(y);
    acts.push_back(std::move(y));
    off += static_cast<std::size_t>(out * in + out);
  }
  return acts;
}

// Backward through a chain given d loss / d output. Writes weight gradients to
// `gw` (may be null) and returns d loss / d input.
Matrix chain_backward(const double* w, const std::vector<std::size_t>& sizes,
                      const std::vector<Matrix>& acts, Matrix delta, double* gw) {
  std::vector<std::size_t> offsets{0};
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    offsets.push_back(offsets.back() + sizes[l] * sizes[l + 1] + sizes[l + 1]);
  for (std::size_t l = sizes.size() - 1; l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    const double* wl = w + offsets[l];
    if (gw) {
      MatrixMap gwm(gw + offsets[l], out, in);
      gwm.noalias() = delta.transpose() * acts[l];
      VectorMap(gw + offsets[l] + out * in, out) = delta.colwise().sum().transpose();
    }
    Matrix prev = delta * ConstMatrixMap(wl, out, in);
    if (l > 0) elu_backward_from_output_inplace(acts[l], prev);
    delta = std::move(prev);
  }
  return delta;
}

Matrix standardize_rows(const Standardizer& st, const Eigen::Ref<const Matrix>& thetas) {
  return (thetas.rowwise() - st.mean.transpose()).array().rowwise() /
         st.std.transpose().array();
}

Matrix destandardize_rows(const Standardizer& st, const Eigen::Ref<const Matrix>& out) {
  Matrix th = out.array().rowwise() * st.std.transpose().array();
  th.rowwise() += st.mean.transpose();
  return th;
}

void check_ae(const AutoencoderParams& ae) {
  const auto p = static_cast<Eigen::Index>(ae.param_dim());
  require_dims(ae.latent_dim >= 1, "autoencoder: latent dim must be >= 1");
  require_dims(ae.stats.mean.size() == p && ae.stats.std.size() == p,
               "autoencoder: standardization stats do not match P");
  require_dims(static_cast<std::size_t>(ae.weights.size()) ==
                   ae.encoder_weight_count() + ae.decoder_weight_count(),
               "autoencoder: weight vector has the wrong length");
}

std::vector<std::size_t> sample_rows(std::size_t total, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, total);
  // Partial Fisher-Yates: the first `count` entries are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

Matrix gather_rows(const Eigen::Ref<const Matrix>& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

}  // namespace

Vector Standardizer::apply(const Eigen::Ref<const Vector>& theta) const {
  require_dims(theta.size() == mean.size(), "standardize: length mismatch");
  return (theta - mean).cwiseQuotient(std);
}

Vector Standardizer::invert(const Eigen::Ref<const Vector>& x) const {
  require_dims(x.size() == mean.size(), "destandardize: length mismatch");
  return mean + std.cwiseProduct(x);
}

Standardizer standardize_fit(const Eigen::Ref<const Matrix>& params) {
  if (params.rows() < 2) throw UsageError("standardize_fit: need at least two rows");
  Standardizer st;
  // Shifted by the first row: constant columns get exactly their value as mean.
  const Eigen::RowVectorXd shift = params.row(0);
  const Matrix shifted = params.rowwise() - shift;
  st.mean = (shift + shifted.colwise().mean()).transpose();
  const Matrix centered = params.rowwise() - st.mean.transpose();
  st.std = (centered.array().square().colwise().sum() / static_cast<double>(params.rows()))
               .sqrt()
               .transpose();
  st.std = st.std.cwiseMax(kStdFloor);
  return st;
}

std::size_t dense_chain_count(const std::vector<std::size_t>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

std::vector<std::size_t> AutoencoderParams::encoder_sizes() const {
  std::vector<std::size_t> s{param_dim()};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(latent_dim);
  return s;
}

std::vector<std::size_t> AutoencoderParams::decoder_sizes() const {
  auto s = encoder_sizes();
  std::reverse(s.begin(), s.end());
  return s;
}

std::size_t AutoencoderParams::encoder_weight_count() const {
  return dense_chain_count(encoder_sizes());
}

std::size_t AutoencoderParams::decoder_weight_count() const {
  return dense_chain_count(decoder_sizes());
}

std::span<const double> AutoencoderParams::encoder_weights() const {
  return {weights.data(), encoder_weight_count()};
}

std::span<const double> AutoencoderParams::decoder_weights() const {
  return {weights.data() + encoder_weight_count(), decoder_weight_count()};
}

AutoencoderParams init_autoencoder(const MlpArchitecture& policy, std::size_t latent_dim,
                                   const Standardizer& stats, Rng& rng) {
  policy.validate();
  if (latent_dim < 1) throw ConfigError("autoencoder: latent dim must be >= 1");
  AutoencoderParams ae;
  ae.policy = policy;
  ae.latent_dim = latent_dim;
  ae.stats = stats;
  ae.weights = Vector::Zero(
      static_cast<Eigen::Index>(ae.encoder_weight_count() + ae.decoder_weight_count()));
  check_ae(ae);
  std::size_t off = 0;
  for (const auto& sizes : {ae.encoder_sizes(), ae.decoder_sizes()}) {
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(sizes[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      const std::size_t nw = sizes[l] * sizes[l + 1];
      for (std::size_t i = 0; i < nw; ++i) ae.weights[static_cast<Eigen::Index>(off + i)] = u(rng);
      off += nw + sizes[l + 1];
    }
  }
  return ae;
}

Matrix encode_batch(const AutoencoderParams& ae, const Eigen::Ref<const Matrix>& thetas) {
  check_ae(ae);
  require_dims(static_cast<std::size_t>(thetas.cols()) == ae.param_dim(),
               "encode: parameter vectors must have length P");
  auto acts = chain_forward(ae.encoder_weights().data(), ae.encoder_sizes(),
                            standardize_rows(ae.stats, thetas));
  return std::move(acts.back());
}

Matrix decode_batch(const AutoencoderParams& ae, const Eigen::Ref<const Matrix>& zs) {
  check_ae(ae);
  require_dims(static_cast<std::size_t>(zs.cols()) == ae.latent_dim,
               "decode: latent codes must have length k");
  const auto acts = chain_forward(ae.decoder_weights().data(), ae.decoder_sizes(), zs);
  return destandardize_rows(ae.stats, acts.back());
}

Vector encode(const AutoencoderParams& ae, const Eigen::Ref<const Vector>& theta) {
  return encode_batch(ae, theta.transpose()).row(0).transpose();
}

Vector decode(const AutoencoderParams& ae, const Eigen::Ref<const Vector>& z) {
  return decode_batch(ae, z.transpose()).row(0).transpose();
}

LossAndGrad behavioral_loss(const AutoencoderParams& ae, const Eigen::Ref<const Matrix>& thetas,
                            const Eigen::Ref<const Matrix>& states, bool with_grad,
                            int threads) {
  check_ae(ae);
  const auto& arch = ae.policy;
  require_dims(static_cast<std::size_t>(thetas.cols()) == ae.param_dim(),
               "behavioral_loss: parameter vectors must have length P");
  require_dims(thetas.rows() >= 1 && states.rows() >= 1, "behavioral_loss: empty batch");
  require_dims(static_cast<std::size_t>(states.cols()) == arch.input_dim,
               "behavioral_loss: state width does not match the policy input");

  const Eigen::Index batch = thetas.rows();
  const double scale =
      1.0 / (static_cast<double>(batch) * static_cast<double>(states.rows()) *
             static_cast<double>(arch.output_dim));

  const auto enc = chain_forward(ae.encoder_weights().data(), ae.encoder_sizes(),
                                 standardize_rows(ae.stats, thetas));
  const auto dec = chain_forward(ae.decoder_weights().data(), ae.decoder_sizes(), enc.back());
  const Matrix recon = destandardize_rows(ae.stats, dec.back());

  Vector sq(batch);
  Matrix g_theta(with_grad ? batch : 0, thetas.cols());
  parallel_for(static_cast<std::size_t>(batch), threads, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector theta = thetas.row(r).transpose();
    const Vector theta_hat = recon.row(r).transpose();
    const Matrix target = act_batch(arch, view(theta), states);
    if (!with_grad) {
      sq[r] = (act_batch(arch, view(theta_hat), states) - target).squaredNorm();
      return;
    }
    Vector g = forward_backward(arch, view(theta_hat), states, [&](const Matrix& actions) {
      const Matrix diff = actions - target;
      sq[r] = diff.squaredNorm();
      return Matrix((2.0 * scale) * diff);
    });
    g_theta.row(r) = g.transpose();
  });

  LossAndGrad out;
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) total += sq[i];
  out.loss = total * scale;
  if (!std::isfinite(out.loss)) throw NumericError("behavioral_loss: non-finite loss");
  if (!with_grad) return out;

  out.grad = Vector::Zero(ae.weights.size());
  double* g_enc = out.grad.data();
  double* g_dec = out.grad.data() + ae.encoder_weight_count();
  Matrix d_out = g_theta.array().rowwise() * ae.stats.std.transpose().array();
  Matrix d_z = chain_backward(ae.decoder_weights().data(), ae.decoder_sizes(), dec,
                              std::move(d_out), g_dec);
  chain_backward(ae.encoder_weights().data(), ae.encoder_sizes(), enc, std::move(d_z), g_enc);
  if (!out.grad.allFinite()) throw NumericError("behavioral_loss: non-finite gradient");
  return out;
}

Vector decoder_pullback(const AutoencoderParams& ae, const Eigen::Ref<const Vector>& z,
                        const Eigen::Ref<const Vector>& grad_theta) {
  check_ae(ae);
  require_dims(static_cast<std::size_t>(z.size()) == ae.latent_dim,
               "decoder_pullback: z must have length k");
  require_dims(static_cast<std::size_t>(grad_theta.size()) == ae.param_dim(),
               "decoder_pullback: grad_theta must have length P");
  const auto dec = chain_forward(ae.decoder_weights().data(), ae.decoder_sizes(), z.transpose());
  Matrix d_out = grad_theta.cwiseProduct(ae.stats.std).transpose();
  Matrix d_z =
      chain_backward(ae.decoder_weights().data(), ae.decoder_sizes(), dec, std::move(d_out), nullptr);
  return d_z.row(0).transpose();
}

void CompressorTrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
  if (batch_size < 1 || states_per_step < 1 || validation_states < 1)
    throw ConfigError("train: batch size and state counts must be >= 1");
  if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("train: holdout must be in (0, 1)");
  if (patience < 1 || !(factor > 0.0 && factor < 1.0))
    throw ConfigError("train: plateau patience must be >= 1 and factor in (0, 1)");
}

TrainResult train_autoencoder(const PolicyDataset& dataset, const StateProbe& probe,
                              std::size_t latent_dim, const CompressorTrainConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = dataset.size();
  if (n < 3) throw UsageError("train: dataset needs at least three policies");
  require_dims(dataset.param_dim() == param_count(dataset.arch),
               "train: dataset parameters do not match its architecture");
  require_dims(static_cast<std::size_t>(probe.states.cols()) == dataset.arch.input_dim,
               "train: probe states do not match the policy input");

  Rng split_rng = make_rng(seed, "ae-split");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), split_rng);
  std::size_t n_hold = static_cast<std::size_t>(std::llround(cfg.holdout * static_cast<double>(n)));
  n_hold = std::clamp<std::size_t>(n_hold, 1, n - 2);
  std::vector<std::size_t> hold(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_hold), perm.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  const Matrix train_params = gather_rows(dataset.params, train);
  const Matrix hold_params = gather_rows(dataset.params, hold);

  Rng init_rng = make_rng(seed, "ae-init");
  AutoencoderParams ae =
      init_autoencoder(dataset.arch, latent_dim, standardize_fit(train_params), init_rng);

  Rng val_rng = make_rng(seed, "ae-val-states");
  const auto probe_rows = static_cast<std::size_t>(probe.states.rows());
  const Matrix val_states =
      gather_rows(probe.states, sample_rows(probe_rows, cfg.validation_states, val_rng));

  auto validation = [&](const AutoencoderParams& model) {
    double acc = 0.0;
    for (Eigen::Index r0 = 0; r0 < hold_params.rows();
         r0 += static_cast<Eigen::Index>(cfg.batch_size)) {
      const Eigen::Index rows =
          std::min<Eigen::Index>(static_cast<Eigen::Index>(cfg.batch_size), hold_params.rows() - r0);
      acc += behavioral_loss(model, hold_params.middleRows(r0, rows), val_states, false, cfg.threads)
                 .loss *
             static_cast<double>(rows);
    }
    return acc / static_cast<double>(hold_params.rows());
  };

  TrainResult res;
  res.report.train_size = train.size();
  res.report.holdout_size = hold.size();
  res.report.initial_val_loss = validation(ae);
  double best = res.report.initial_val_loss;
  Vector best_weights = ae.weights;

  AdamState adam(static_cast<std::size_t>(ae.weights.size()), cfg.lr);
  std::optional<PlateauScheduler> plateau;
  if (cfg.lr > 0.0) plateau.emplace(cfg.lr, cfg.patience, cfg.factor);

  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = plateau ? plateau->lr() : 0.0;
    adam.lr = lr;
    Rng order_rng = make_rng(seed, "ae-epoch", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);

    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size, ++step, ++steps) {
      const std::vector<std::size_t> rows(
          order.begin() + static_cast<std::ptrdiff_t>(b0),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b0 + cfg.batch_size)));
      Rng state_rng = make_rng(seed, "ae-step-states", step);
      const Matrix states =
          gather_rows(probe.states, sample_rows(probe_rows, cfg.states_per_step, state_rng));
      const auto lg = behavioral_loss(ae, gather_rows(train_params, rows), states, true, cfg.threads);
      adam_step(adam, std::span<double>(ae.weights.data(), static_cast<std::size_t>(ae.weights.size())),
                view(lg.grad));
      epoch_loss += lg.loss;
    }
    const double val = validation(ae);
    res.report.train_loss.push_back(epoch_loss / static_cast<double>(steps));
    res.report.val_loss.push_back(val);
    res.report.lr.push_back(lr);
    if (val < best) {
      best = val;
      best_weights = ae.weights;
      res.report.best_epoch = epoch;
    }
    if (plateau) plateau->step(val);
  }

  ae.weights = best_weights;
  res.report.final_val_loss = best;
  res.dataset_codes = encode_batch(ae, dataset.params);
  res.ae = std::move(ae);
  return res;
}

}  // namespace polycomp
