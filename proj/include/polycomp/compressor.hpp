#pragma once

// Stage 2: autoencoder over flat policy parameters, trained so that decoded
// policies act like the originals on sampled probe states.
//
// Encoder P -> 25 -> 10 -> k, decoder k -> 10 -> 25 -> P. ELU on hidden
// layers, linear latent and output layers. Inputs are standardized per
// parameter; decoder outputs are mapped back with the same statistics.

#include <cstdint>
#include <span>
#include <vector>

#include "polycomp/core_math.hpp"
#include "polycomp/dataset_gen.hpp"
#include "polycomp/policy.hpp"

namespace polycomp {

inline constexpr double kStdFloor = 1e-8;

struct Standardizer {
  Vector mean;
  Vector std;

  Vector apply(const Eigen::Ref<const Vector>& theta) const;
  Vector invert(const Eigen::Ref<const Vector>& x) const;
};

// Columnwise mean and population std of an N x P matrix, std floored.
Standardizer standardize_fit(const Eigen::Ref<const Matrix>& params);

struct AutoencoderParams {
  MlpArchitecture policy;           // architecture of the compressed policies
  std::size_t latent_dim = 0;
  std::vector<std::size_t> hidden{25, 10};  // encoder widths; decoder mirrors
  Standardizer stats;
  Vector weights;  // encoder layers, then decoder layers; per layer W (out x in) then b

  std::size_t param_dim() const { return param_count(policy); }
  std::vector<std::size_t> encoder_sizes() const;  // {P, 25, 10, k}
  std::vector<std::size_t> decoder_sizes() const;  // {k, 10, 25, P}
  std::size_t encoder_weight_count() const;
  std::size_t decoder_weight_count() const;
  std::span<const double> encoder_weights() const;
  std::span<const double> decoder_weights() const;
};

// Weight count of a chain of dense layers with the given widths.
std::size_t dense_chain_count(const std::vector<std::size_t>& sizes);

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
AutoencoderParams init_autoencoder(const MlpArchitecture& policy, std::size_t latent_dim,
                                   const Standardizer& stats, Rng& rng);

Vector encode(const AutoencoderParams& ae, const Eigen::Ref<const Vector>& theta);
Vector decode(const AutoencoderParams& ae, const Eigen::Ref<const Vector>& z);
// Row-wise versions: N x P -> N x k and N x k -> N x P.
Matrix encode_batch(const AutoencoderParams& ae, const Eigen::Ref<const Matrix>& thetas);
Matrix decode_batch(const AutoencoderParams& ae, const Eigen::Ref<const Matrix>& zs);

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;  // same layout as AutoencoderParams::weights; empty if not requested
};

// Mean over batch x states x action dims of (pi_theta(s) - pi_theta_hat(s))^2
// with theta_hat = decode(encode(theta)). Target actions are constants.
LossAndGrad behavioral_loss(const AutoencoderParams& ae, const Eigen::Ref<const Matrix>& thetas,
                            const Eigen::Ref<const Matrix>& states, bool with_grad = true,
                            int threads = 1);

// (d g(z) / d z)^T grad_theta for the frozen decoder g.
Vector decoder_pullback(const AutoencoderParams& ae, const Eigen::Ref<const Vector>& z,
                        const Eigen::Ref<const Vector>& grad_theta);

struct CompressorTrainConfig {
  int epochs = 50;
  double lr = 1e-4;
  std::size_t batch_size = 64;
  std::size_t states_per_step = 1000;
  std::size_t validation_states = 1000;
  double holdout = 0.2;
  int patience = 15;
  double factor = 0.5;
  int threads = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;  // mean step loss per epoch
  std::vector<double> val_loss;    // validation loss after each epoch
  std::vector<double> lr;          // lr in effect during each epoch
  double initial_val_loss = 0.0;   // before the first update
  double final_val_loss = 0.0;     // of the returned (best) weights
  int best_epoch = -1;             // 0-based; -1 means the initial weights
  std::size_t train_size = 0;
  std::size_t holdout_size = 0;
};

struct TrainResult {
  AutoencoderParams ae;
  TrainReport report;
  Matrix dataset_codes;  // encodings of every dataset policy under the returned weights
};

// `probe` supplies the states that are subsampled at every step.
TrainResult train_autoencoder(const PolicyDataset& dataset, const StateProbe& probe,
                              std::size_t latent_dim, const CompressorTrainConfig& cfg,
                              std::uint64_t seed);

}  // namespace polycomp
