#include "polycomp/policy.hpp"

#include <cmath>
#include <numeric>

namespace polycomp {

namespace {

// Per-layer transposed weights (in x out) for dense_forward_rows.
std::vector<double> transpose_layer(std::span<const double> theta, const LayerSlice& sl) {
  std::vector<double> wt(sl.in * sl.out);
  const double* w = theta.data() + sl.weight_offset;
  for (std::size_t o = 0; o < sl.out; ++o)
    for (std::size_t i = 0; i < sl.in; ++i) wt[i * sl.out + o] = w[o * sl.in + i];
  return wt;
}

void check_theta(const MlpArchitecture& arch, std::span<const double> theta) {
  const std::size_t p = param_count(arch);
  require_dims(theta.size() == p, "policy: theta has length " + std::to_string(theta.size()) +
                                      ", architecture needs " + std::to_string(p));
}

double norm_sd(double lo, double hi) { return (hi - lo) / std::sqrt(12.0); }

// Activations of every layer; acts[0] is the normalized input, acts.back()
// the tanh output.
std::vector<Matrix> forward_all(const MlpArchitecture& arch, std::span<const double> theta,
                                const Eigen::Ref<const Matrix>& states) {
  check_theta(arch, theta);
  require_dims(static_cast<std::size_t>(states.cols()) == arch.input_dim,
               "policy: states have " + std::to_string(states.cols()) + " columns, expected " +
                   std::to_string(arch.input_dim));
  const auto slices = layer_slices(arch);
  const Eigen::Index m = states.rows();
  std::vector<Matrix> acts;
  acts.reserve(slices.size() + 1);

  Matrix x0(m, states.cols());
  for (Eigen::Index c = 0; c < states.cols(); ++c) {
    const double lo = arch.state_lower[c], hi = arch.state_upper[c];
    const double mid = 0.5 * (lo + hi), sd = norm_sd(lo, hi);
    for (Eigen::Index r = 0; r < m; ++r) x0(r, c) = (states(r, c) - mid) / sd;
  }
  acts.push_back(std::move(x0));

  for (std::size_t l = 0; l < slices.size(); ++l) {
    const auto& sl = slices[l];
    const auto wt = transpose_layer(theta, sl);
    Matrix y(m, static_cast<Eigen::Index>(sl.out));
    dense_forward_rows(acts.back().data(), static_cast<std::size_t>(m), sl.in, wt.data(),
                       theta.data() + sl.bias_offset, sl.out, y.data());
    if (l + 1 < slices.size()) {
      elu_inplace(y);
    } else {
      for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = std::tanh(y.data()[i]);
    }
    acts.push_back(std::move(y));
  }
  return acts;
}

Vector backward_all(const MlpArchitecture& arch, std::span<const double> theta,
                    const std::vector<Matrix>& acts, const Eigen::Ref<const Matrix>& grad_actions) {
  const auto slices = layer_slices(arch);
  const Matrix& out = acts.back();
  require_dims(grad_actions.rows() == out.rows() && grad_actions.cols() == out.cols(),
               "backprop_weights: grad_actions shape must match act_batch output");
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(theta.size()));
  Matrix delta = grad_actions.array() * (1.0 - out.array().square());
  for (std::size_t l = slices.size(); l-- > 0;) {
    const auto& sl = slices[l];
    const auto in = static_cast<Eigen::Index>(sl.in), o = static_cast<Eigen::Index>(sl.out);
    MatrixMap gw(grad.data() + sl.weight_offset, o, in);
    gw.noalias() = delta.transpose() * acts[l];
    VectorMap(grad.data() + sl.bias_offset, o) = delta.colwise().sum().transpose();
    if (l > 0) {
      ConstMatrixMap w(theta.data() + sl.weight_offset, o, in);
      Matrix prev = delta * w;
      elu_backward_from_output_inplace(acts[l], prev);
      delta = std::move(prev);
    }
  }
  return grad;
}

}  // namespace

void MlpArchitecture::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("architecture: dims must be >= 1");
  for (auto h : hidden)
    if (h < 1) throw ConfigError("architecture: hidden sizes must be >= 1");
  if (state_lower.size() != input_dim || state_upper.size() != input_dim)
    throw ConfigError("architecture: state bounds must have input_dim entries");
  for (std::size_t i = 0; i < input_dim; ++i)
    if (!(state_lower[i] < state_upper[i]))
      throw ConfigError("architecture: degenerate state bounds at feature " + std::to_string(i));
}

PolicySizePreset parse_preset(std::string_view name) {
  if (name == "small") return PolicySizePreset::Small;
  if (name == "medium") return PolicySizePreset::Medium;
  if (name == "large") return PolicySizePreset::Large;
  if (name == "medium-rc") return PolicySizePreset::MediumRc;
  throw ConfigError("unknown policy preset '" + std::string(name) +
                    "' (expected small, medium, large, medium-rc)");
}

std::string_view preset_name(PolicySizePreset preset) {
  switch (preset) {
    case PolicySizePreset::Small: return "small";
    case PolicySizePreset::Medium: return "medium";
    case PolicySizePreset::Large: return "large";
    case PolicySizePreset::MediumRc: return "medium-rc";
  }
  return "?";
}

std::vector<std::size_t> preset_hidden(PolicySizePreset preset) {
  switch (preset) {
    case PolicySizePreset::Small: return {4};
    case PolicySizePreset::Medium: return {32, 32};
    case PolicySizePreset::Large: return {400, 300};
    case PolicySizePreset::MediumRc: return {64, 64};
  }
  return {};
}

MlpArchitecture make_architecture(const EnvConfig& env, std::vector<std::size_t> hidden) {
  MlpArchitecture arch;
  arch.input_dim = env.obs_dim();
  arch.output_dim = env.act_dim();
  arch.hidden = std::move(hidden);
  arch.state_lower = env.obs_lower();
  arch.state_upper = env.obs_upper();
  arch.validate();
  return arch;
}

MlpArchitecture make_architecture(const EnvConfig& env, PolicySizePreset preset) {
  if (env.id == EnvId::Reacher && preset == PolicySizePreset::Medium)
    preset = PolicySizePreset::MediumRc;
  return make_architecture(env, preset_hidden(preset));
}

std::size_t param_count(const MlpArchitecture& arch) {
  std::size_t p = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l)
    p += arch.layer_in(l) * arch.layer_out(l) + arch.layer_out(l);
  return p;
}

std::vector<LayerSlice> layer_slices(const MlpArchitecture& arch) {
  std::vector<LayerSlice> out;
  std::size_t off = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    LayerSlice sl;
    sl.in = arch.layer_in(l);
    sl.out = arch.layer_out(l);
    sl.weight_offset = off;
    sl.bias_offset = off + sl.in * sl.out;
    off = sl.bias_offset + sl.out;
    out.push_back(sl);
  }
  return out;
}

Vector normalize_state(std::span<const double> lower, std::span<const double> upper,
                       std::span<const double> state) {
  require_dims(lower.size() == state.size() && upper.size() == state.size(),
               "normalize_state: bounds/state length mismatch");
  Vector out(static_cast<Eigen::Index>(state.size()));
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (!(lower[i] < upper[i])) throw ConfigError("normalize_state: degenerate bounds");
    const double mid = 0.5 * (lower[i] + upper[i]);
    out[static_cast<Eigen::Index>(i)] = (state[i] - mid) / norm_sd(lower[i], upper[i]);
  }
  return out;
}

Vector act(const MlpArchitecture& arch, std::span<const double> theta,
           std::span<const double> state) {
  require_dims(state.size() == arch.input_dim, "act: state length mismatch");
  check_theta(arch, theta);
  PolicyRunner runner(arch, theta);
  Vector a(static_cast<Eigen::Index>(arch.output_dim));
  runner(state, std::span<double>(a.data(), arch.output_dim));
  return a;
}

Matrix act_batch(const MlpArchitecture& arch, std::span<const double> theta,
                 const Eigen::Ref<const Matrix>& states) {
  auto acts = forward_all(arch, theta, states);
  return std::move(acts.back());
}

Vector backprop_weights(const MlpArchitecture& arch, std::span<const double> theta,
                        const Eigen::Ref<const Matrix>& states,
                        const Eigen::Ref<const Matrix>& grad_actions) {
  const auto acts = forward_all(arch, theta, states);
  return backward_all(arch, theta, acts, grad_actions);
}

Vector forward_backward(const MlpArchitecture& arch, std::span<const double> theta,
                        const Eigen::Ref<const Matrix>& states,
                        const std::function<Matrix(const Matrix& actions)>& grad_of_actions,
                        Matrix* actions_out) {
  const auto acts = forward_all(arch, theta, states);
  const Matrix g = grad_of_actions(acts.back());
  if (actions_out) *actions_out = acts.back();
  return backward_all(arch, theta, acts, g);
}

Vector sample_random(const MlpArchitecture& arch, Rng& rng, double scale) {
  if (!(scale > 0.0)) throw ConfigError("sample_random: scale must be > 0");
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector theta(static_cast<Eigen::Index>(param_count(arch)));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = u(rng);
  return theta;
}

PolicyRunner::PolicyRunner(const MlpArchitecture& arch, std::span<const double> theta)
    : arch_(&arch), slices_(layer_slices(arch)), theta_(theta) {
  check_theta(arch, theta);
  std::size_t widest = arch.input_dim;
  for (const auto& sl : slices_) {
    transposed_.push_back(transpose_layer(theta, sl));
    widest = std::max(widest, sl.out);
  }
  for (std::size_t i = 0; i < arch.input_dim; ++i) {
    mean_.push_back(0.5 * (arch.state_lower[i] + arch.state_upper[i]));
    sd_.push_back(norm_sd(arch.state_lower[i], arch.state_upper[i]));
  }
  buf_a_.resize(widest);
  buf_b_.resize(widest);
}

void PolicyRunner::operator()(std::span<const double> state, std::span<double> action) {
  require_dims(state.size() == arch_->input_dim && action.size() == arch_->output_dim,
               "PolicyRunner: state/action length mismatch");
  for (std::size_t i = 0; i < state.size(); ++i) buf_a_[i] = (state[i] - mean_[i]) / sd_[i];
  double* cur = buf_a_.data();
  double* nxt = buf_b_.data();
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    const auto& sl = slices_[l];
    dense_forward_rows(cur, 1, sl.in, transposed_[l].data(), theta_.data() + sl.bias_offset,
                       sl.out, nxt);
    if (l + 1 < slices_.size()) {
      elu_span({nxt, sl.out});
    } else {
      for (std::size_t j = 0; j < sl.out; ++j) action[j] = std::tanh(nxt[j]);
    }
    std::swap(cur, nxt);
  }
}

}  // namespace polycomp
