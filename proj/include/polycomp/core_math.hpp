#pragma once

// Dense linear algebra carriers, layer primitives and the two optimizers
// (Adam, plateau scheduler) shared by the policy, compressor and PGPE code.

#include <Eigen/Core>

#include <cstddef>
#include <span>

#include "polycomp/errors.hpp"

namespace polycomp {

using Vector = Eigen::VectorXd;
// Row-major so that a flat parameter block maps onto a weight matrix with
// the documented (out x in, row-major) layout without copies.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

inline ConstVectorMap as_vector(std::span<const double> s) {
  return ConstVectorMap(s.data(), static_cast<Eigen::Index>(s.size()));
}
inline VectorMap as_vector(std::span<double> s) {
  return VectorMap(s.data(), static_cast<Eigen::Index>(s.size()));
}

inline std::span<const double> view(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

bool all_finite(const Eigen::Ref<const Vector>& v);
bool all_finite(const Eigen::Ref<const Matrix>& m);

// ---------------------------------------------------------------------------
// Single-sample layer ops.

// y = W x + b
Vector affine_forward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& w,
                      const Eigen::Ref<const Vector>& b);

struct AffineGrads {
  Vector grad_x;
  Matrix grad_w;
  Vector grad_b;
};

AffineGrads affine_backward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& w,
                            const Eigen::Ref<const Vector>& grad_y);

// ELU with alpha = 1.
double elu(double x);
Vector elu_forward(const Eigen::Ref<const Vector>& x);
Vector elu_backward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& grad_y);

Vector tanh_forward(const Eigen::Ref<const Vector>& x);
// Takes the forward *output* y, since tanh' = 1 - y^2.
Vector tanh_backward(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& grad_y);

// ---------------------------------------------------------------------------
// Row-batched variants: rows of X are samples.

// Y = X W^T + 1 b^T
void affine_forward_batch(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& w,
                          const Eigen::Ref<const Vector>& b, Matrix& y);

// Y = X Wt + 1 b^T on raw row-major buffers, with Wt the (in x out)
// transpose of the layer weights. Every output element accumulates its dot
// product in the same order regardless of how many rows are processed, so a
// single-row call reproduces the corresponding row of a batched call exactly.
void dense_forward_rows(const double* x, std::size_t rows, std::size_t in, const double* wt,
                        const double* b, std::size_t out, double* y);

// In place: Y <- elu(Y)
void elu_inplace(Eigen::Ref<Matrix> y);
// Same values as elu() applied elementwise.
void elu_span(std::span<double> v);
// grad <- grad * elu'(z), computed from the elu output (elu' = y + 1 for z <= 0).
void elu_backward_from_output_inplace(const Eigen::Ref<const Matrix>& y, Eigen::Ref<Matrix> grad);

// ---------------------------------------------------------------------------
// Optimizers.

struct AdamState {
  Vector m;
  Vector v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr = 1e-3;

  AdamState() = default;
  AdamState(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double epsilon = 1e-8);
};

// One descent step: params <- params - lr * mhat / (sqrt(vhat) + eps).
// Throws NumericError on non-finite gradients; params and state untouched.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, int patience, double factor);

  // Feeds one validation loss and returns the learning rate to use next.
  double step(double val_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }
  int epochs_since_improvement() const { return since_improvement_; }
  int patience() const { return patience_; }
  double factor() const { return factor_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_;
  int since_improvement_ = 0;
};

}  // namespace polycomp
