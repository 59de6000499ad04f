#include "polycomp/core_math.hpp"

#include <cstring>

#include <cmath>
#include <limits>
#include <string>

namespace polycomp {

bool all_finite(const Eigen::Ref<const Vector>& v) { return v.allFinite(); }
bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

Vector affine_forward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& w,
                      const Eigen::Ref<const Vector>& b) {
  require_dims(w.cols() == x.size(), "affine_forward: W has " + std::to_string(w.cols()) +
                                         " columns but x has length " + std::to_string(x.size()));
  require_dims(w.rows() == b.size(), "affine_forward: W rows != len(b)");
  return w * x + b;
}

AffineGrads affine_backward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& w,
                            const Eigen::Ref<const Vector>& grad_y) {
  require_dims(w.cols() == x.size(), "affine_backward: W cols != len(x)");
  require_dims(w.rows() == grad_y.size(), "affine_backward: W rows != len(grad_y)");
  AffineGrads g;
  g.grad_x = w.transpose() * grad_y;
  g.grad_w = grad_y * x.transpose();
  g.grad_b = grad_y;
  return g;
}

namespace {

// ELU over groups of four through Eigen's vectorized exp. Partial groups are
// padded, so every element goes through the same code path whatever the
// length of the buffer it sits in.
inline void elu_group(Eigen::Array4d& a) {
  a = (a > 0.0).select(a, a.min(0.0).exp() - 1.0);
}

void elu_buffer(double* p, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    Eigen::Array4d a = Eigen::Map<const Eigen::Array4d>(p + i);
    elu_group(a);
    Eigen::Map<Eigen::Array4d>(p + i) = a;
  }
  if (i < n) {
    Eigen::Array4d a = Eigen::Array4d::Zero();
    for (std::size_t t = i; t < n; ++t) a[static_cast<Eigen::Index>(t - i)] = p[t];
    elu_group(a);
    for (std::size_t t = i; t < n; ++t) p[t] = a[static_cast<Eigen::Index>(t - i)];
  }
}

}  // namespace

double elu(double x) {
  elu_buffer(&x, 1);
  return x;
}

void elu_span(std::span<double> v) { elu_buffer(v.data(), v.size()); }

Vector elu_forward(const Eigen::Ref<const Vector>& x) {
  Vector y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = elu(x[i]);
  return y;
}

Vector elu_backward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& grad_y) {
  require_dims(x.size() == grad_y.size(), "elu_backward: length mismatch");
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = grad_y[i] * (x[i] > 0.0 ? 1.0 : std::exp(x[i]));
  return g;
}

Vector tanh_forward(const Eigen::Ref<const Vector>& x) { return x.array().tanh().matrix(); }

Vector tanh_backward(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& grad_y) {
  require_dims(y.size() == grad_y.size(), "tanh_backward: length mismatch");
  return (grad_y.array() * (1.0 - y.array().square())).matrix();
}

void affine_forward_batch(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& w,
                          const Eigen::Ref<const Vector>& b, Matrix& y) {
  require_dims(w.cols() == x.cols(), "affine_forward_batch: W cols != X cols");
  require_dims(w.rows() == b.size(), "affine_forward_batch: W rows != len(b)");
  y.resize(x.rows(), w.rows());
  y.noalias() = x * w.transpose();
  y.rowwise() += b.transpose();
}

namespace {

// Four-lane double vectors; every lane accumulates in the same order as the
// scalar tail loop, so the column split does not change results.
using Lanes = double __attribute__((vector_size(32)));
constexpr std::size_t kLanes = 4;

inline Lanes load_lanes(const double* p) {
  Lanes v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_lanes(double* p, Lanes v) { std::memcpy(p, &v, sizeof v); }

template <std::size_t Rows, std::size_t Groups>
void dense_tile(const double* x, std::size_t in, const double* wt, const double* b,
                std::size_t out, std::size_t j0, double* y) {
  Lanes acc[Rows][Groups];
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t g = 0; g < Groups; ++g) acc[r][g] = Lanes{0.0, 0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < in; ++k) {
    const double* w = wt + k * out + j0;
    Lanes wv[Groups];
    for (std::size_t g = 0; g < Groups; ++g) wv[g] = load_lanes(w + g * kLanes);
    for (std::size_t r = 0; r < Rows; ++r) {
      const double s = x[r * in + k];
      const Lanes xv = {s, s, s, s};
      for (std::size_t g = 0; g < Groups; ++g) acc[r][g] += xv * wv[g];
    }
  }
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t g = 0; g < Groups; ++g)
      store_lanes(y + r * out + j0 + g * kLanes, acc[r][g] + load_lanes(b + j0 + g * kLanes));
}

template <std::size_t Rows>
void dense_block(const double* x, std::size_t in, const double* wt, const double* b,
                 std::size_t out, double* y) {
  std::size_t j0 = 0;
  for (; j0 + 4 * kLanes <= out; j0 += 4 * kLanes) dense_tile<Rows, 4>(x, in, wt, b, out, j0, y);
  for (; j0 + kLanes <= out; j0 += kLanes) dense_tile<Rows, 1>(x, in, wt, b, out, j0, y);
  for (std::size_t j = j0; j < out; ++j) {
    for (std::size_t r = 0; r < Rows; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += x[r * in + k] * wt[k * out + j];
      y[r * out + j] = acc + b[j];
    }
  }
}

}  // namespace

void dense_forward_rows(const double* x, std::size_t rows, std::size_t in, const double* wt,
                        const double* b, std::size_t out, double* y) {
  constexpr std::size_t kRowTile = 4;
  std::size_t i = 0;
  for (; i + kRowTile <= rows; i += kRowTile)
    dense_block<kRowTile>(x + i * in, in, wt, b, out, y + i * out);
  for (; i < rows; ++i) dense_block<1>(x + i * in, in, wt, b, out, y + i * out);
}

void elu_inplace(Eigen::Ref<Matrix> y) {
  elu_buffer(y.data(), static_cast<std::size_t>(y.size()));
}

void elu_backward_from_output_inplace(const Eigen::Ref<const Matrix>& y, Eigen::Ref<Matrix> grad) {
  require_dims(y.rows() == grad.rows() && y.cols() == grad.cols(), "elu_backward: shape mismatch");
  grad.array() *= (y.array() > 0.0).select(1.0, y.array() + 1.0);
}

AdamState::AdamState(std::size_t size, double lr_, double beta1_, double beta2_, double epsilon_)
    : m(Vector::Zero(static_cast<Eigen::Index>(size))),
      v(Vector::Zero(static_cast<Eigen::Index>(size))),
      beta1(beta1_),
      beta2(beta2_),
      epsilon(epsilon_),
      lr(lr_) {}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  const auto n = static_cast<Eigen::Index>(params.size());
  require_dims(static_cast<Eigen::Index>(grads.size()) == n && state.m.size() == n &&
                   state.v.size() == n,
               "adam_step: params/grads/state size mismatch");
  auto g = as_vector(grads);
  if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient");

  state.t += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  auto p = as_vector(params);
  p.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.epsilon);
}

PlateauScheduler::PlateauScheduler(double initial_lr, int patience, double factor)
    : lr_(initial_lr),
      patience_(patience),
      factor_(factor),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(initial_lr > 0.0) || patience < 1 || !(factor > 0.0 && factor < 1.0))
    throw ConfigError("PlateauScheduler: need lr > 0, patience >= 1, factor in (0,1)");
}

double PlateauScheduler::step(double val_loss) {
  if (!std::isfinite(val_loss)) throw NumericError("PlateauScheduler: non-finite validation loss");
  if (val_loss < best_) {
    best_ = val_loss;
    since_improvement_ = 0;
  } else if (++since_improvement_ == patience_) {
    lr_ *= factor_;
    since_improvement_ = 0;
  }
  return lr_;
}

}  // namespace polycomp
