#pragma once

// Deterministic MLP policies over flat parameter vectors.
//
// Flat layout: for each layer in order, the weight matrix (out x in,
// row-major) followed by its bias vector. Inputs pass through a fixed
// normalization derived from the declared state bounds, hidden layers use
// ELU, the output layer uses tanh.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polycomp/core_math.hpp"
#include "polycomp/envs.hpp"
#include "polycomp/seeding.hpp"

namespace polycomp {

struct MlpArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
  std::vector<double> state_lower;
  std::vector<double> state_upper;

  void validate() const;
  std::size_t num_layers() const { return hidden.size() + 1; }
  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden[l - 1]; }
  std::size_t layer_out(std::size_t l) const {
    return l == hidden.size() ? output_dim : hidden[l];
  }

  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

enum class PolicySizePreset { Small, Medium, Large, MediumRc };

PolicySizePreset parse_preset(std::string_view name);
std::string_view preset_name(PolicySizePreset preset);
std::vector<std::size_t> preset_hidden(PolicySizePreset preset);
// "medium" resolves to the 64x64 Reacher network when env is rc.
MlpArchitecture make_architecture(const EnvConfig& env, PolicySizePreset preset);
MlpArchitecture make_architecture(const EnvConfig& env, std::vector<std::size_t> hidden);

std::size_t param_count(const MlpArchitecture& arch);

struct LayerSlice {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};
std::vector<LayerSlice> layer_slices(const MlpArchitecture& arch);

// (s - m) / sd with m = (lo + hi) / 2 and sd = (hi - lo) / sqrt(12).
Vector normalize_state(std::span<const double> lower, std::span<const double> upper,
                       std::span<const double> state);

Vector act(const MlpArchitecture& arch, std::span<const double> theta,
           std::span<const double> state);

// Row i of the result equals act(arch, theta, states.row(i)) bit for bit.
Matrix act_batch(const MlpArchitecture& arch, std::span<const double> theta,
                 const Eigen::Ref<const Matrix>& states);

// d(sum_ij grad_actions_ij * action_ij) / d theta, summed over all rows.
Vector backprop_weights(const MlpArchitecture& arch, std::span<const double> theta,
                        const Eigen::Ref<const Matrix>& states,
                        const Eigen::Ref<const Matrix>& grad_actions);

// Same as backprop_weights but also returns the forward actions, avoiding a
// second forward pass when the caller needs both.
Vector forward_backward(const MlpArchitecture& arch, std::span<const double> theta,
                        const Eigen::Ref<const Matrix>& states,
                        const std::function<Matrix(const Matrix& actions)>& grad_of_actions,
                        Matrix* actions_out = nullptr);

// Each entry ~ Uniform(-scale, scale).
Vector sample_random(const MlpArchitecture& arch, Rng& rng, double scale = 1.0);

// Single-state evaluator with preallocated scratch for rollout loops. Holds a
// view of theta; the parameter buffer must outlive the runner.
class PolicyRunner {
 public:
  PolicyRunner(const MlpArchitecture& arch, std::span<const double> theta);

  void operator()(std::span<const double> state, std::span<double> action);

 private:
  const MlpArchitecture* arch_;
  std::vector<LayerSlice> slices_;
  std::vector<std::vector<double>> transposed_;  // per layer, in x out
  std::span<const double> theta_;
  std::vector<double> mean_;
  std::vector<double> sd_;
  std::vector<double> buf_a_;
  std::vector<double> buf_b_;
};

}  // namespace polycomp
