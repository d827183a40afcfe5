#pragma once

#include "scn/numerics/tensor.hpp"

#include <span>

namespace scn {

// Elementwise arithmetic. Operands must have identical shapes.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor);
template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset);

/// x[n x m] + bias[m], bias broadcast over rows.
template <typename Scalar>
Tensor<Scalar> add_row_vector(const Tensor<Scalar>& x, const Tensor<Scalar>& bias);

/// Standard matrix product of two rank-2 tensors.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a);
template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a);
/// Row sums of a rank-2 tensor, shape [rows].
template <typename Scalar>
Tensor<Scalar> row_sum(const Tensor<Scalar>& a);

template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& a);
template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a);
template <typename Scalar>
Tensor<Scalar> pow(const Tensor<Scalar>& a, Scalar exponent);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope);

/// Softmax along `axis`, stabilised by subtracting the per-slice maximum.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis);
template <typename Scalar>
Tensor<Scalar> log_softmax(const Tensor<Scalar>& x, int axis);

/// out[i][j] = s[i] * a[i][j] * s[j] for square `a`.
template <typename Scalar>
Tensor<Scalar> scale_rows_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& s);

template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, int axis);
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape);
/// Gathers slices along the first axis.
template <typename Scalar>
Tensor<Scalar> index_rows(const Tensor<Scalar>& x, std::span<const Index> rows);

/// Cross-correlation (no kernel flip) of x[B,C,H,W] with kernel[O,C,kh,kw]
/// and zero padding. Output extent floor((H + 2p - kh) / stride) + 1.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel, int stride,
                      int padding);

enum class PoolKind { Max, Avg };

/// Square-window pooling on x[B,C,H,W]. Padded cells never win a max and are
/// excluded from averages. Max ties go to the first element in row-major
/// window order.
template <typename Scalar>
Tensor<Scalar> pool2d(const Tensor<Scalar>& x, PoolKind kind, int kernel, int stride,
                      int padding = 0);

enum class NormMode { Train, Infer };

template <typename Scalar>
struct BatchNormState {
  VectorX<Scalar> running_mean;
  VectorX<Scalar> running_var;

  static BatchNormState identity(Index channels) {
    return {VectorX<Scalar>::Zero(channels), VectorX<Scalar>::Ones(channels)};
  }
};

/// Per-channel normalization of x[B,C,...] followed by gamma * xhat + beta.
/// Train mode normalizes by biased batch statistics and blends the unbiased
/// variance into the running state; infer mode uses the running state.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, BatchNormState<Scalar>& state,
                          NormMode mode, Scalar eps = Scalar(1e-5),
                          Scalar momentum = Scalar(0.1));

}  // namespace scn
