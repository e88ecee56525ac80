#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rldn/tensor.hpp"

// Differentiable whole-tensor operations. Every function here records its
// inputs on the autodiff graph when grad mode is on and at least one input
// requires a gradient.
namespace rldn::ops {

// Elementwise (identical shapes unless noted).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);

/// Clamp into [lo, hi]. NaN maps to `lo`; the gradient passes where
/// lo <= x <= hi.
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [N, M] -> [N]
Tensor sum_rows(const Tensor& a);
/// [N, M] -> [N], picking column `index[i]` from row i.
Tensor gather_rows(const Tensor& a, std::span<const int> index);

Tensor reshape(const Tensor& a, Shape shape);

/// x: [in] or [N, in]; weight: [out, in]; bias: [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Row-wise over the last axis of a [n] or [N, n] tensor. Probabilities are
/// floored at the smallest normal double so they stay strictly positive.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

/// mean((a - b)^2)
Tensor mse_loss(const Tensor& a, const Tensor& b);

/// input [C_in, H, W], weight [C_out, C_in, k, k], bias [C_out].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

/// input [C_in, H, W], weight [C_in, C_out, k, k], bias [C_out]. Output
/// extent (H - 1) * stride - 2 * padding + k + output_padding.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        int stride, int padding, int output_padding);

enum class NormMode { kTrain, kEval };

struct BatchNormStats {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C], unbiased estimate
  /// [1] count of train-mode batches folded in so far. The update weight is
  /// max(momentum, 1 / (count + 1)), a cumulative average for the first
  /// batches that settles into the exponential one.
  Tensor batches_tracked;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormStats fresh(std::size_t channels);
};

/// Per-channel normalization over H x W. Train mode uses batch statistics
/// and folds them into `stats`; eval mode reads `stats`.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, NormMode mode);

}  // namespace rldn::ops
